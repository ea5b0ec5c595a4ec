"""Dense, tridiagonal and matrix-free linear-algebra kernels.

Every solver here is deterministic: iterative methods take an explicit
``seed`` for their start vector.  Matrices are plain ``numpy`` arrays
(dense) or ``scipy.sparse`` matrices (the 2-D form pencils); vectors may be
real or complex.

Inner products are ``<x, y>_W = x^H W y`` where ``W`` is either ``None``
(Euclidean), a 1-D array of positive weights (a diagonal mass matrix) or a
callable returning ``W @ y``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.csgraph import reverse_cuthill_mckee

Action = Callable[[np.ndarray], np.ndarray]
Weight = Union[None, np.ndarray, Action]

PIVOT_RTOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    """A pivot fell below ``1e-14 * max|A|`` during LU factorization."""


class NotSymmetricError(ValueError):
    pass


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# inner products


def _apply_weight(weight: Weight, y: np.ndarray) -> np.ndarray:
    if weight is None:
        return y
    if callable(weight):
        return weight(y)
    return weight * y


def inner(x: np.ndarray, y: np.ndarray, weight: Weight = None) -> complex:
    return np.vdot(x, _apply_weight(weight, y))


def norm(x: np.ndarray, weight: Weight = None) -> float:
    return float(np.sqrt(max(inner(x, x, weight).real, 0.0)))


def _start_vector(dim: int, seed: int, dtype=float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    if np.issubdtype(dtype, np.complexfloating):
        v = v + 1j * rng.standard_normal(dim)
    return v


# ---------------------------------------------------------------------------
# LU factorizations


class DenseLU:
    """Partial-pivoting LU of a dense square matrix with a pivot floor."""

    def __init__(self, A: np.ndarray):
        A = np.asarray(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("LU needs a square matrix")
        if not np.all(np.isfinite(A)):
            raise ValueError("matrix has non-finite entries")
        self.shape = A.shape
        self.dtype = np.result_type(A.dtype, float)
        scale = np.max(np.abs(A)) if A.size else 0.0
        if scale == 0.0:
            raise SingularMatrixError("zero matrix")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            self._lu, self._piv = sla.lu_factor(A, check_finite=False)
        pivots = np.abs(np.diag(self._lu))
        if np.min(pivots) < PIVOT_RTOL * scale:
            raise SingularMatrixError(
                f"pivot {np.min(pivots):.3e} below {PIVOT_RTOL:g} * max|A| = {scale:.3e}"
            )

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve((self._lu, self._piv), b, check_finite=False)

    def solve_adjoint(self, b: np.ndarray) -> np.ndarray:
        """Solve ``A^H x = b``."""
        return sla.lu_solve((self._lu, self._piv), b, trans=2, check_finite=False)


def _bandwidth(coo: sp.coo_matrix) -> tuple[int, int]:
    if coo.nnz == 0:
        return 0, 0
    d = coo.row - coo.col
    return int(max(d.max(), 0)), int(max(-d.min(), 0))


class BandedLU:
    """LU of a sparse matrix stored in LAPACK band form after reordering.

    The ordering is ``perm`` when given, otherwise the narrower of the
    natural order and reverse Cuthill-McKee.  Factorization and solves are
    LAPACK ``gbtrf``/``gbtrs``.
    """

    def __init__(self, A: sp.spmatrix, perm: Optional[np.ndarray] = None):
        A = sp.csr_matrix(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("LU needs a square matrix")
        if not np.all(np.isfinite(A.data)):
            raise ValueError("matrix has non-finite entries")
        scale = np.max(np.abs(A.data)) if A.nnz else 0.0
        if scale == 0.0:
            raise SingularMatrixError("zero matrix")
        if perm is None:
            natural = _bandwidth(A.tocoo())
            rcm = reverse_cuthill_mckee(
                (abs(A) + abs(A).T).tocsr(), symmetric_mode=True
            )
            B = A[rcm][:, rcm].tocoo()
            perm = rcm if max(_bandwidth(B)) < max(natural) else None
        if perm is not None:
            perm = np.asarray(perm)
            B = A[perm][:, perm].tocoo()
        else:
            B = A.tocoo()
        self.perm = perm
        self.shape = (n, n)
        kl, ku = _bandwidth(B)
        self.kl, self.ku = kl, ku
        dtype = np.result_type(B.dtype, float)
        self.dtype = dtype
        ab = np.zeros((2 * kl + ku + 1, n), dtype=dtype)
        np.add.at(ab, (kl + ku + B.row - B.col, B.col), B.data)
        gbtrf, gbtrs = lapack.get_lapack_funcs(("gbtrf", "gbtrs"), (ab,))
        lu, piv, info = gbtrf(ab, kl, ku)
        if info < 0:
            raise ValueError(f"gbtrf: illegal argument {-info}")
        pivots = np.abs(lu[kl + ku, :])
        if info > 0 or np.min(pivots) < PIVOT_RTOL * scale:
            raise SingularMatrixError(
                f"band pivot {np.min(pivots):.3e} below {PIVOT_RTOL:g} * max|A| = {scale:.3e}"
            )
        self._lu, self._piv, self._gbtrs = lu, piv, gbtrs

    def _solve(self, b: np.ndarray, trans: int) -> np.ndarray:
        b = np.asarray(b)
        dtype = np.result_type(self.dtype, b.dtype)
        if dtype != self.dtype:
            # real factor, complex right-hand side
            return self._solve(b.real, trans) + 1j * self._solve(b.imag, trans)
        rhs = b[self.perm] if self.perm is not None else b
        x, info = self._gbtrs(self._lu, self.kl, self.ku, rhs, self._piv, trans=trans)
        if info != 0:
            raise ValueError(f"gbtrs failed with info={info}")
        if self.perm is not None:
            out = np.empty_like(x)
            out[self.perm] = x
            return out
        return x

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._solve(b, 0)

    def solve_adjoint(self, b: np.ndarray) -> np.ndarray:
        return self._solve(b, 2)


def factorize(A, perm: Optional[np.ndarray] = None):
    """Dense LU for arrays, banded LU for sparse matrices."""
    if sp.issparse(A):
        return BandedLU(A, perm=perm)
    return DenseLU(np.asarray(A))


def lu_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` by pivoted LU.

    Raises :class:`SingularMatrixError` when a pivot magnitude is below
    ``1e-14 * max|A|``.
    """
    return factorize(A).solve(np.asarray(b))


# ---------------------------------------------------------------------------
# symmetric tridiagonal: Sturm-sequence bisection


@dataclass(frozen=True)
class SymTridiag:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        e = np.asarray(self.offdiag, dtype=float)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("diag must be a non-empty 1-D sequence")
        if e.shape != (d.size - 1,):
            raise ValueError("offdiag must have length n - 1")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
            raise ValueError("non-finite entries")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def n(self) -> int:
        return self.diag.size

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def gershgorin(self) -> tuple[float, float]:
        r = np.zeros(self.n)
        r[:-1] += np.abs(self.offdiag)
        r[1:] += np.abs(self.offdiag)
        return float(np.min(self.diag - r)), float(np.max(self.diag + r))


def sturm_count(T: SymTridiag, x: np.ndarray) -> np.ndarray:
    """Number of eigenvalues of ``T`` strictly below each entry of ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d, e2 = T.diag, T.offdiag ** 2
    pivmin = np.finfo(float).tiny * max(1.0, float(e2.max()) if e2.size else 1.0)
    q = d[0] - x
    q = np.where(np.abs(q) < pivmin, -pivmin, q)
    count = (q < 0).astype(np.int64)
    for i in range(1, T.n):
        q = (d[i] - x) - e2[i - 1] / q
        q = np.where(np.abs(q) < pivmin, -pivmin, q)
        count += q < 0
    return count


def sym_tridiag_eigs(T: SymTridiag, k: int, *, rtol: float = 1e-12, sections: int = 32) -> np.ndarray:
    """The ``k`` smallest eigenvalues of ``T`` by Sturm-sequence multisection.

    Each eigenvalue is bracketed to ``rtol * max(1, |lambda|)``.  Every pass
    evaluates Sturm counts at ``sections - 1`` interior points of every open
    bracket at once, so the Python-level loop over ``n`` runs only a few
    times.
    """
    if not 1 <= k <= T.n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={T.n}")
    lo0, hi0 = T.gershgorin()
    pad = 2 * np.finfo(float).eps * max(abs(lo0), abs(hi0), 1.0)
    lo = np.full(k, lo0 - pad)
    hi = np.full(k, hi0 + pad)
    idx = np.arange(k)  # target: count(lo) <= idx < count(hi)
    frac = np.arange(1, sections) / sections
    for _ in range(200):
        width = hi - lo
        open_ = width > rtol * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
        if not open_.any():
            break
        which = np.flatnonzero(open_)
        pts = lo[which, None] + width[which, None] * frac[None, :]
        counts = sturm_count(T, pts.ravel()).reshape(pts.shape)
        for row, i in enumerate(which):
            c = counts[row]
            # largest point with count <= i becomes the new lower end
            below = np.flatnonzero(c <= idx[i])
            above = np.flatnonzero(c > idx[i])
            if below.size:
                lo[i] = pts[row, below[-1]]
            if above.size:
                hi[i] = pts[row, above[0]]
    return 0.5 * (lo + hi)


def sym_tridiag_eigs_many(diags: np.ndarray, offdiags: np.ndarray, k: int, *,
                          rtol: float = 1e-12, sections: int = 16) -> np.ndarray:
    """Batched :func:`sym_tridiag_eigs` for ``B`` matrices of equal size.

    ``diags`` has shape ``(B, n)`` and ``offdiags`` shape ``(B, n - 1)``;
    returns shape ``(B, k)``.  The Sturm recurrence runs once per row for
    all matrices and all bracket points together.
    """
    d = np.atleast_2d(np.asarray(diags, dtype=float))
    e2 = np.atleast_2d(np.asarray(offdiags, dtype=float)) ** 2
    B, n = d.shape
    if e2.shape != (B, n - 1):
        raise ValueError("offdiags must have shape (B, n - 1)")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    r = np.zeros((B, n))
    e = np.sqrt(e2)
    r[:, :-1] += e
    r[:, 1:] += e
    lo0, hi0 = np.min(d - r, axis=1), np.max(d + r, axis=1)
    pad = 2 * np.finfo(float).eps * np.maximum(np.maximum(np.abs(lo0), np.abs(hi0)), 1.0)
    lo = np.repeat((lo0 - pad)[:, None], k, axis=1)
    hi = np.repeat((hi0 + pad)[:, None], k, axis=1)
    idx = np.arange(k)[None, :, None]
    frac = np.arange(1, sections) / sections
    pivmin = np.finfo(float).tiny * max(1.0, float(e2.max()) if e2.size else 1.0)
    for _ in range(200):
        width = hi - lo
        if not np.any(width > rtol * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))):
            break
        pts = lo[:, :, None] + width[:, :, None] * frac  # (B, k, P)
        x = pts.reshape(B, -1)
        q = d[:, :1] - x
        q = np.where(np.abs(q) < pivmin, -pivmin, q)
        count = (q < 0).astype(np.int64)
        for i in range(1, n):
            q = (d[:, i:i + 1] - x) - e2[:, i - 1:i] / q
            q = np.where(np.abs(q) < pivmin, -pivmin, q)
            count += q < 0
        count = count.reshape(pts.shape)
        below = count <= idx
        # last point with count <= index, first point with count > index
        nb = below.sum(axis=2)
        has_lo = nb > 0
        has_hi = nb < pts.shape[2]
        take_lo = np.take_along_axis(pts, np.maximum(nb - 1, 0)[:, :, None], 2)[:, :, 0]
        take_hi = np.take_along_axis(pts, np.minimum(nb, pts.shape[2] - 1)[:, :, None], 2)[:, :, 0]
        lo = np.where(has_lo, take_lo, lo)
        hi = np.where(has_hi, take_hi, hi)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# dense symmetric: parallel-order cyclic Jacobi (oracle)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        keep = (p < n) & (q < n)
        rounds.append((p[keep], q[keep]))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_dense_sym(A: np.ndarray, *, rtol: float = 1e-12, max_sweeps: int = 60) -> np.ndarray:
    """Full spectrum of a real symmetric matrix by cyclic Jacobi rotations.

    Rotations on disjoint index pairs are applied together (round-robin
    ordering), which keeps every sweep vectorized.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n or n < 1:
        raise ValueError("square matrix required")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > 1e-12 * max(scale, np.finfo(float).tiny):
        raise NotSymmetricError("matrix is not symmetric within 1e-12 relative")
    A = 0.5 * (A + A.T)
    if n == 1:
        return A.diagonal().copy()
    rounds = _round_robin(n)
    target = rtol * scale
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(A.diagonal()))
        if off <= target:
            break
        for p, q in rounds:
            apq = A[p, q]
            app, aqq = A[p, p], A[q, q]
            d = aqq - app
            sgn = np.where(d < 0, -1.0, 1.0)
            denom = np.abs(d) + np.hypot(d, 2.0 * apq)
            t = np.where(denom > 0, sgn * 2.0 * apq / np.where(denom > 0, denom, 1.0), 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rp, rq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * rp - s[:, None] * rq
            A[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = cp * c[None, :] - cq * s[None, :]
            A[:, q] = cp * s[None, :] + cq * c[None, :]
    else:
        raise ConvergenceError("Jacobi did not converge")
    return np.sort(A.diagonal())


def hermitian_embedding(H: np.ndarray) -> np.ndarray:
    """Real symmetric ``[[Re, -Im], [Im, Re]]``; spectrum of ``H`` doubled."""
    H = np.asarray(H)
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


# ---------------------------------------------------------------------------
# Lanczos with full reorthogonalization and locking


def lanczos_lowest(
    apply: Action,
    dim: int,
    k: int,
    *,
    weight: Weight = None,
    tol: float = 1e-8,
    max_iter: Optional[int] = None,
    seed: int = 0,
    dtype=float,
    return_vectors: bool = False,
):
    """The ``k`` lowest eigenvalues of a self-adjoint action.

    ``apply`` must be self-adjoint in the ``weight`` inner product.  Each
    pass runs Lanczos with full reorthogonalization (against its own basis
    and all locked vectors) until the bottom Ritz pairs have residual
    ``<= tol * ||A||``; converged pairs are locked and a new pass starts from
    a fresh vector.  Passes continue until ``k`` pairs are locked and one
    more pass finds nothing lower, so repeated eigenvalues are returned with
    their multiplicity.
    """
    if not 1 <= k <= dim:
        raise ValueError(f"need 1 <= k <= dim, got k={k}, dim={dim}")
    max_iter = dim if max_iter is None else min(max_iter, dim)
    locked_vals: list[float] = []
    locked_vecs: list[np.ndarray] = []
    Wlocked: list[np.ndarray] = []
    anorm = 0.0
    pass_seed = seed
    verified = False
    for _ in range(4 * k + 8):
        need = k - len(locked_vals)
        room = dim - len(locked_vals)
        if room <= 0:
            break
        vals, vecs, anorm = _lanczos_pass(
            apply, dim, max(need, 1), weight, tol, min(max_iter, room), pass_seed,
            dtype, locked_vecs, Wlocked, anorm,
        )
        pass_seed += 1
        if need > 0:
            for v, x in zip(vals, vecs):
                locked_vals.append(v)
                locked_vecs.append(x)
                Wlocked.append(_apply_weight(weight, x))
            if not vals:
                raise ConvergenceError("Lanczos pass converged no Ritz pair")
            continue
        # verification pass: anything below the current k-th value?
        top = sorted(locked_vals)[k - 1]
        lower = [(v, x) for v, x in zip(vals, vecs) if v < top - tol * max(anorm, 1e-300)]
        if not lower:
            verified = True
            break
        for v, x in lower:
            locked_vals.append(v)
            locked_vecs.append(x)
            Wlocked.append(_apply_weight(weight, x))
    if len(locked_vals) < k:
        raise ConvergenceError(f"Lanczos found only {len(locked_vals)} of {k} eigenpairs")
    if not verified and len(locked_vals) < dim:
        raise ConvergenceError("Lanczos verification pass did not settle")
    order = np.argsort(locked_vals)[:k]
    values = np.asarray(locked_vals)[order]
    if return_vectors:
        return values, np.column_stack([locked_vecs[i] for i in order])
    return values


def _lanczos_pass(apply, dim, need, weight, tol, max_iter, seed, dtype, locked, Wlocked, anorm):
    q = _start_vector(dim, seed, dtype).astype(np.result_type(dtype, float))
    q = _orthogonalize(q, locked, Wlocked)
    q /= norm(q, weight)
    Q = [q]
    WQ = [_apply_weight(weight, q)]
    alphas, betas = [], []
    q_prev = np.zeros_like(q)
    beta = 0.0
    for m in range(1, max_iter + 1):
        r = apply(Q[-1])
        r = r - beta * q_prev
        alpha = np.vdot(WQ[-1], r).real
        r = r - alpha * Q[-1]
        for _ in range(2):
            r = _orthogonalize(r, Q, WQ)
            r = _orthogonalize(r, locked, Wlocked)
        alphas.append(alpha)
        beta = norm(r, weight)
        theta, S = sla.eigh_tridiagonal(np.array(alphas), np.array(betas)) if m > 1 else (
            np.array(alphas), np.ones((1, 1)))
        anorm = max(anorm, float(np.max(np.abs(theta))))
        floor = max(anorm, np.finfo(float).tiny)
        if beta <= 1e-13 * floor:
            # invariant subspace: every Ritz pair is exact
            take = m
        else:
            ok = np.abs(beta * S[-1, :]) <= tol * floor
            take = ok.size if ok.all() else int(np.argmin(ok))
            if take < need:
                if m == max_iter:
                    raise ConvergenceError(f"Lanczos did not converge in {max_iter} steps")
                take = 0
        if take:
            basis = np.column_stack(Q)
            return list(theta[:take]), [basis @ S[:, i] for i in range(take)], anorm
        q_prev = Q[-1]
        q_new = r / beta
        Q.append(q_new)
        WQ.append(_apply_weight(weight, q_new))
        betas.append(beta)
    raise ConvergenceError("Lanczos did not converge")


def _orthogonalize(r, basis, Wbasis):
    if not basis:
        return r
    B = np.column_stack(basis)
    WB = np.column_stack(Wbasis)
    return r - B @ (WB.conj().T @ r)


# ---------------------------------------------------------------------------
# norms and singular values


def operator_norm(
    apply: Action,
    apply_adjoint: Action,
    dim: int,
    tol: float = 1e-10,
    *,
    weight: Weight = None,
    seed: int = 0,
    max_iter: int = 100_000,
    dtype=complex,
    method: str = "power",
) -> float:
    """``||A||`` from the dominant eigenvalue of ``A* A``.

    ``apply_adjoint`` must be the adjoint for the ``weight`` inner product
    on the domain (the range inner product is folded into it).

    ``method="power"`` runs power iteration and stops when the
    eigen-residual of ``A* A`` falls below ``tol`` times the Rayleigh
    quotient.  ``method="lanczos"`` runs :func:`lanczos_lowest` on
    ``-A* A`` instead; it does not stall when the two top singular values
    nearly coincide.
    """
    if method == "lanczos":
        top = -lanczos_lowest(
            lambda x: -apply_adjoint(apply(x)), dim, 1, weight=weight, tol=tol,
            seed=seed, dtype=dtype,
        )[0]
        return float(np.sqrt(max(top, 0.0)))
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    v = _start_vector(dim, seed, dtype)
    v /= norm(v, weight)
    lam = 0.0
    for _ in range(max_iter):
        w = apply_adjoint(apply(v))
        lam = inner(v, w, weight).real
        if lam <= 0.0:
            if norm(w, weight) == 0.0:
                return 0.0
        r = w - lam * v
        if norm(r, weight) <= tol * abs(lam):
            return float(np.sqrt(max(lam, 0.0)))
        nw = norm(w, weight)
        if nw == 0.0:
            return 0.0
        v = w / nw
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def smallest_singular(A, *, tol: float = 1e-10, seed: int = 0,
                      perm: Optional[np.ndarray] = None) -> float:
    """``sigma_min(A)`` by inverse iteration on ``A^H A`` with LU solves.

    The inverse iteration is Krylov-accelerated (Lanczos on
    ``(A^H A)^{-1}``), which keeps it from stalling when the two smallest
    singular values nearly coincide.  The estimate returned is the forward
    quotient ``||A x||`` of the normalized dominant Ritz vector.  Returns 0
    when the LU detects singularity.
    """
    try:
        lu = factorize(A, perm=perm)
    except SingularMatrixError:
        return 0.0
    n = A.shape[0]
    if n == 1:
        return float(abs(A[0, 0]) if not sp.issparse(A) else abs(A.toarray()[0, 0]))
    _, x = lanczos_lowest(
        lambda v: -lu.solve(lu.solve_adjoint(v)), n, 1, tol=tol, seed=seed,
        dtype=complex, return_vectors=True,
    )
    x = x[:, 0] / np.linalg.norm(x[:, 0])
    return float(np.linalg.norm(A @ x))


# ---------------------------------------------------------------------------
# shift-invert eigenvalue refinement


def pencil_solver(A, M, z: complex, perm: Optional[np.ndarray] = None) -> Action:
    """The action ``x -> (A - z M)^{-1} M x``; raises if ``z`` is an eigenvalue."""
    if sp.issparse(A) or sp.issparse(M):
        Mm = sp.diags(M) if np.ndim(M) == 1 else sp.csr_matrix(M)
        shifted = sp.csr_matrix(A) - z * Mm
    else:
        Mm = np.diag(M) if np.ndim(M) == 1 else np.asarray(M)
        shifted = np.asarray(A) - z * Mm
    lu = factorize(shifted, perm=perm)
    return lambda x: lu.solve(Mm @ x)


def shifted_inverse_eig(
    solve,
    z0: complex,
    tol: float = 1e-12,
    *,
    weight: Weight = None,
    deflate: Sequence[np.ndarray] = (),
    seed: int = 0,
    max_iter: int = 5000,
    dim: Optional[int] = None,
    return_vector: bool = False,
):
    """Eigenvalue of a pencil nearest ``z0`` by shifted inverse iteration.

    ``solve`` is the action of ``(A - z0 M)^{-1} M`` or an ``(A, M)`` pair
    (factorized here, raising :class:`SingularMatrixError` when ``z0`` is an
    eigenvalue).  ``deflate`` vectors are projected out in the ``weight``
    inner product after each step; this is only meaningful for self-adjoint
    pencils.
    """
    if isinstance(solve, tuple):
        A, M = solve
        dim = A.shape[0]
        solve = pencil_solver(A, M, z0)
    if dim is None:
        raise ValueError("dim is required with a solve action")
    Wdef = [_apply_weight(weight, u) for u in deflate]
    v = _start_vector(dim, seed, complex)
    v = _orthogonalize(v, list(deflate), Wdef)
    v /= norm(v, weight)
    lam_prev = None
    for _ in range(max_iter):
        w = solve(v)
        w = _orthogonalize(w, list(deflate), Wdef)
        theta = inner(v, w, weight)
        if theta == 0:
            raise ConvergenceError("inverse iteration collapsed")
        lam = z0 + 1.0 / theta
        v = w / norm(w, weight)
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return (lam, v) if return_vector else lam
        lam_prev = lam
    raise ConvergenceError(f"shifted inverse iteration did not converge near {z0}")


# ---------------------------------------------------------------------------
# Hermitian pencils


def _gershgorin_bounds(A) -> tuple[float, float]:
    if sp.issparse(A):
        A = sp.csr_matrix(A)
        d = A.diagonal().real
        r = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(A.diagonal())
    else:
        A = np.asarray(A)
        d = np.diag(A).real
        r = np.sum(np.abs(A), axis=1) - np.abs(np.diag(A))
    return float(np.min(d - r)), float(np.max(d + r))


def _is_hermitian(A, rtol=1e-12) -> bool:
    if sp.issparse(A):
        D = sp.csr_matrix(A) - sp.csr_matrix(A).conj().T
        dn = np.max(np.abs(D.data)) if D.nnz else 0.0
        an = np.max(np.abs(sp.csr_matrix(A).data)) if A.nnz else 0.0
    else:
        A = np.asarray(A)
        dn = np.max(np.abs(A - A.conj().T)) if A.size else 0.0
        an = np.max(np.abs(A)) if A.size else 0.0
    return dn <= rtol * max(an, np.finfo(float).tiny)


def _check_positive_definite(B) -> None:
    if sp.issparse(B):
        B = sp.csr_matrix(B)
        p = reverse_cuthill_mckee((abs(B) + abs(B).T).tocsr(), symmetric_mode=True)
        C = B[p][:, p].tocoo()
        kl, ku = _bandwidth(C)
        u = max(kl, ku)
        n = B.shape[0]
        ab = np.zeros((u + 1, n), dtype=np.result_type(C.dtype, float))
        upper = C.row <= C.col
        ab[u + C.row[upper] - C.col[upper], C.col[upper]] = C.data[upper]
        try:
            sla.cholesky_banded(ab, lower=False, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(str(exc)) from None
    else:
        try:
            np.linalg.cholesky(np.asarray(B))
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(str(exc)) from None


def pencil_lower_bound(A, B) -> float:
    """Gershgorin-based lower bound for ``min x^H A x / x^H B x``."""
    ga, _ = _gershgorin_bounds(A)
    gb_lo, gb_hi = _gershgorin_bounds(B)
    if ga >= 0:
        return ga / gb_hi
    if gb_lo > 0:
        return ga / gb_lo
    # B's Gershgorin discs reach zero; fall back to the smallest diagonal
    if sp.issparse(B):
        bmin = float(np.min(B.diagonal().real))
    else:
        bmin = float(np.min(np.diag(np.asarray(B)).real))
    return ga / bmin


def hermitian_pencil_smallest(A, B, *, tol: float = 1e-10, seed: int = 0) -> float:
    """Smallest ``lambda`` with ``A x = lambda B x`` (``B`` positive definite).

    Inverse iteration in the ``B`` inner product, shifted below a Gershgorin
    lower bound and accelerated by Lanczos on the shift-inverted action.
    """
    if not (_is_hermitian(A) and _is_hermitian(B)):
        raise NotSymmetricError("pencil matrices must be Hermitian")
    _check_positive_definite(B)
    bound = pencil_lower_bound(A, B)
    sigma = bound - 1e-3 * max(abs(bound), 1.0)
    if sp.issparse(A) or sp.issparse(B):
        As, Bs = sp.csr_matrix(A), sp.csr_matrix(B)
        lu = factorize(As - sigma * Bs)
        Bop = lambda x: Bs @ x  # noqa: E731
    else:
        As, Bs = np.asarray(A), np.asarray(B)
        lu = factorize(As - sigma * Bs)
        Bop = lambda x: Bs @ x  # noqa: E731
    n = As.shape[0]
    dtype = np.result_type(As.dtype, Bs.dtype, float)
    theta = lanczos_lowest(
        lambda x: -lu.solve(Bop(x)), n, 1, weight=Bop, tol=tol, seed=seed, dtype=dtype,
    )[0]
    # theta = -1 / (lambda - sigma)
    return float(sigma - 1.0 / theta)


def pencil_lowest(A, M, k: int, *, shift: Optional[float] = None, tol: float = 1e-10,
                  seed: int = 0, perm: Optional[np.ndarray] = None, return_vectors: bool = False):
    """``k`` lowest eigenvalues of a symmetric pencil with diagonal mass ``M``.

    Shift-invert Lanczos in the ``M`` inner product; ``shift`` must lie
    below the wanted eigenvalues (default: Gershgorin lower bound).  The
    returned values are Rayleigh quotients of the converged Ritz vectors.
    """
    M = np.asarray(M)
    Md = sp.diags(M) if sp.issparse(A) else np.diag(M)
    if shift is None:
        b = pencil_lower_bound(A, Md)
        shift = b - 1e-3 * max(abs(b), 1.0)
    shifted = (sp.csr_matrix(A) - shift * Md) if sp.issparse(A) else (np.asarray(A) - shift * Md)
    lu = factorize(shifted, perm=perm)
    n = A.shape[0]
    dtype = np.result_type(A.dtype, float)
    _, vecs = lanczos_lowest(
        lambda x: -lu.solve(M * x), n, k, weight=M, tol=tol, seed=seed, dtype=dtype,
        return_vectors=True,
    )
    # Rayleigh quotients of the Ritz vectors: error quadratic in the residual
    Av = A @ vecs
    vals = np.einsum("ij,ij->j", vecs.conj(), Av).real / np.einsum(
        "ij,ij->j", vecs.conj(), M[:, None] * vecs).real
    order = np.argsort(vals)
    if return_vectors:
        return vals[order], vecs[:, order]
    return vals[order]
