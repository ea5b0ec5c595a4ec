"""Discretized quadratic forms on fibered ``(s, t)`` grids.

All layer models use a periodic ``s`` grid and a transverse ``t`` grid with
unknowns stored fiber by fiber (index ``j * n_t + i``).  A form is kept as a
stiffness matrix together with a diagonal mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .numkernel import operator_norm, sym_tridiag_eigs_many


@dataclass(frozen=True)
class FormPencil:
    """Stiffness ``A`` and diagonal mass ``M`` of a discretized form.

    ``bc`` records the boundary conditions, ``shape`` is ``(n_s, n_t)``.
    """

    A: sp.csr_matrix
    M: np.ndarray
    shape: tuple[int, int]
    bc: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.shape[0] * self.shape[1]
        if self.A.shape != (n, n) or self.M.shape != (n,):
            raise ValueError("matrix sizes do not match the grid shape")
        if not np.all(self.M > 0):
            raise ValueError("mass must be positive definite")

    @property
    def dim(self) -> int:
        return self.M.size

    @property
    def perm(self) -> np.ndarray:
        """Band-reducing ordering: fiber-major when fibers are short, else
        transverse-major (the band is then about ``2 n_s`` wide)."""
        n_s, n_t = self.shape
        fiber = fold_permutation(n_s, n_t)
        if n_t <= n_s:
            return fiber
        return fiber.reshape(n_s, n_t).T.ravel()

    def asymmetry(self) -> float:
        """``max |A - A^H|`` (zero for a self-adjoint pencil)."""
        D = self.A - self.A.conj().T
        return float(abs(D).max()) if D.nnz else 0.0


def fold_permutation(n_s: int, n_t: int) -> np.ndarray:
    """Fiber ordering ``0, n_s-1, 1, n_s-2, ...`` that keeps periodic
    neighbours within two fibers, so the band stays about ``2 n_t`` wide."""
    order = np.empty(n_s, dtype=int)
    order[0::2] = np.arange((n_s + 1) // 2)
    order[1::2] = n_s - 1 - np.arange(n_s // 2)
    return (order[:, None] * n_t + np.arange(n_t)[None, :]).ravel()


def periodic_grid(n_s: int, period: float = 2 * np.pi) -> tuple[np.ndarray, float]:
    ds = period / n_s
    return np.arange(n_s) * ds, ds


def periodic_laplacian(n_s: int, ds: float) -> sp.csr_matrix:
    """Second-order periodic ``-d^2/ds^2`` (stiffness of ``int |phi'|^2`` divided by ``ds``)."""
    if n_s < 3:
        raise ValueError("need at least 3 periodic grid points")
    j = np.arange(n_s)
    k = 1.0 / ds**2
    rows = np.concatenate([j, j, j])
    cols = np.concatenate([j, (j + 1) % n_s, (j - 1) % n_s])
    vals = np.concatenate([np.full(n_s, 2 * k), np.full(n_s, -k), np.full(n_s, -k)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_s, n_s))


def s_flux_stiffness(coef: np.ndarray) -> sp.csr_matrix:
    """Stiffness of ``sum_faces coef * |psi_{j+1,i} - psi_{j,i}|^2``.

    ``coef`` has shape ``(n_s, n_t)``; row ``j`` holds the face between fibers
    ``j`` and ``j + 1`` (periodic).
    """
    n_s, n_t = coef.shape
    j = np.repeat(np.arange(n_s), n_t)
    i = np.tile(np.arange(n_t), n_s)
    a = j * n_t + i
    b = ((j + 1) % n_s) * n_t + i
    c = coef.ravel()
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([c, c, -c, -c])
    n = n_s * n_t
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def s_difference(n_s: int, n_t: int, ds: float) -> sp.csr_matrix:
    """Forward difference ``(psi_{j+1} - psi_j) / ds`` from nodes to faces."""
    n = n_s * n_t
    a = np.arange(n)
    b = ((a // n_t + 1) % n_s) * n_t + a % n_t
    rows = np.concatenate([a, a])
    cols = np.concatenate([b, a])
    vals = np.concatenate([np.full(n, 1.0 / ds), np.full(n, -1.0 / ds)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def fiber_block_diag(blocks: list) -> sp.csr_matrix:
    return sp.block_diag(blocks, format="csr")


def fiber_basis(u: np.ndarray) -> sp.csr_matrix:
    """Columns ``u_j`` placed on fiber ``j`` (``u`` has shape ``(n_s, n_t)``)."""
    n_s, n_t = u.shape
    rows = np.arange(n_s * n_t)
    cols = np.repeat(np.arange(n_s), n_t)
    return sp.csr_matrix((u.ravel(), (rows, cols)), shape=(n_s * n_t, n_s))


def compress(A: sp.spmatrix, U: sp.csr_matrix, ds: float) -> np.ndarray:
    """Matrix of ``phi -> Q(phi u)`` on the ``s`` grid for fiber-normalized
    ``u`` (``sum m u^2 = 1`` per fiber, total mass ``ds m``)."""
    B = (U.T @ A @ U).toarray() / ds
    return 0.5 * (B + B.conj().T)


def projected_commutator_norm(S: sp.spmatrix, U, M, Uf, Mf, *, tol: float = 1e-10) -> float:
    """``||S Pi - Pi_f S||`` between the node space (mass ``M``, fiber
    projector ``U U^T M``) and the face space (``Mf``, ``Uf Uf^T Mf``)."""
    def proj(x, B, W):
        return B @ (B.T @ (W * x))

    def C(x):
        return S @ proj(x, U, M) - proj(S @ x, Uf, Mf)

    def CH(y):
        # weighted adjoint M^-1 C^T Mf
        return U @ (U.T @ (S.T @ (Mf * y))) - S.T @ (Mf * proj(y, Uf, Mf)) / M

    rM, rMf = np.sqrt(M), np.sqrt(Mf)
    return operator_norm(lambda x: rMf * C(x / rM), lambda y: rM * CH(y / rMf), M.size, tol,
                         dtype=float, method="lanczos")


def _thomas(d, e, b):
    """Solve a batch of symmetric tridiagonal systems (no pivoting; the
    callers shift below the spectrum, so the matrices are definite)."""
    n = d.shape[1]
    c = np.empty_like(d)
    x = np.empty_like(b)
    c[:, 0] = d[:, 0]
    x[:, 0] = b[:, 0]
    for i in range(1, n):
        f = e[:, i - 1] / c[:, i - 1]
        c[:, i] = d[:, i] - f * e[:, i - 1]
        x[:, i] = b[:, i] - f * x[:, i - 1]
    x[:, -1] /= c[:, -1]
    for i in range(n - 2, -1, -1):
        x[:, i] = (x[:, i] - e[:, i] * x[:, i + 1]) / c[:, i]
    return x


def tridiag_ground_states(kd, ko, m):
    """Ground states of the fiber pencils ``(K, diag m)`` for a batch of
    tridiagonal stiffness matrices (rows of ``kd``, ``ko``).

    Returns ``(u, lam)`` with ``sum m u^2 = 1`` and positive sum per row.
    """
    d = kd / m
    e = ko / np.sqrt(m[:, :-1] * m[:, 1:])
    lam = sym_tridiag_eigs_many(d, e, 2)
    sigma = lam[:, 0] - 1e-6 * (lam[:, 1] - lam[:, 0])
    y = np.ones_like(d)
    for _ in range(3):
        y = _thomas(d - sigma[:, None], e, y)
        y /= np.linalg.norm(y, axis=1, keepdims=True)
    u = y / np.sqrt(m)
    u *= np.sign(np.sum(u, axis=1, keepdims=True))
    return u, lam[:, 0]
