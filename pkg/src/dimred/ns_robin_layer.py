"""Thin layer with complex Robin data: the non-self-adjoint reduction.

After straightening the layer and the change of function
``phi = sqrt(eps) exp(alpha eps t) u`` the Robin problem becomes a Neumann
problem on ``Omega = [0, 2 pi) x (-1, 1)`` in ``L^2(w ds dt)``,

    w = exp(-2 eps t Re alpha) (1 - eps t kappa),

with the form

    int G w |(d_s - eps t alpha') phi|^2 + eps^-2 int w |d_t phi|^2
      + (2i / eps) int Im(alpha) d_t phi conj(phi) w + int V_eps |phi|^2 w,

``V_eps = |alpha|^2 + alpha d_t w / (eps w)``.  The comparison form uses the
plain measure and ``V_eff = |alpha|^2 - 2 alpha Re alpha - alpha kappa``; the
effective operator ``-d_s^2 + V_eff`` acts on ``t``-independent functions.

Grid: periodic nodes in ``s``, ``n_t`` cells in ``t`` with the unknowns at the
cell centres.  The skew ``t`` term is discretized at interior faces as
``w_f conj(avg phi) diff phi`` and ``d_t w`` in ``V_eps`` by differences of
face weights (boundary faces at ``t = +-1``).  With these choices the
discrete form equals the discretized Robin form before the integration by
parts, boundary terms included, up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import CurveProfile, TubularError, tubular_ok
from .numkernel import (
    factorize,
    hermitian_pencil_smallest,
    operator_norm,
    pencil_solver,
    shifted_inverse_eig,
    smallest_singular,
)
from .pencil import FormPencil, periodic_grid, periodic_laplacian, s_flux_stiffness
from .sweep import SlopeFit, fit_slope

SMIN_FLOOR = 1e-8


class WeightBoundError(ValueError):
    """``eps`` exceeds the range where the weight bounds are guaranteed."""


class InSpectrumError(ValueError):
    """``z`` is numerically in the spectrum of one of the discrete operators."""


@dataclass(frozen=True)
class RobinCoefficient:
    """``alpha(s) = a0 + i b0 cos s``."""

    a0: float = 1.0
    b0: float = 0.5

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return self.a0 + 1j * self.b0 * np.cos(s)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        return -1j * self.b0 * np.sin(s)

    def conjugate(self) -> "RobinCoefficient":
        return RobinCoefficient(self.a0, -self.b0)

    @property
    def sup_real(self) -> float:
        return abs(self.a0)

    @property
    def sup_abs(self) -> float:
        return math.hypot(self.a0, self.b0)


def effective_potential(profile: CurveProfile, alpha, s):
    """``|alpha|^2 - 2 alpha Re(alpha) - alpha kappa``."""
    a = alpha(s) if callable(alpha) else np.asarray(alpha, dtype=complex)
    return np.abs(a) ** 2 - 2 * a * a.real - a * profile.kappa(s)


def eps_max(profile: CurveProfile, alpha: RobinCoefficient) -> float:
    return min(0.5 / max(profile.abs_max, 1e-300), 0.5 / (1.0 + alpha.sup_real))


@dataclass(frozen=True)
class ComplexRobinModel:
    profile: CurveProfile
    alpha: RobinCoefficient
    eps: float
    n_s: int = 64
    n_t: int = 16

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.n_s < 3 or self.n_t < 2:
            raise ValueError("grid too small")
        if not tubular_ok(self.profile, self.eps):
            raise TubularError(f"eps * max|kappa| >= 1 for eps = {self.eps}")
        if self.eps > eps_max(self.profile, self.alpha):
            raise WeightBoundError(f"eps = {self.eps} exceeds eps0 = {eps_max(self.profile, self.alpha):.4g}")
        if self.weight_ratio() > self.weight_ratio_bound() * (1 + 1e-12):
            raise WeightBoundError("weight ratio exceeds its a priori bound")

    @property
    def s(self) -> np.ndarray:
        return periodic_grid(self.n_s, self.profile.period)[0]

    @property
    def ds(self) -> float:
        return self.profile.period / self.n_s

    @property
    def dt(self) -> float:
        return 2.0 / self.n_t

    @property
    def t(self) -> np.ndarray:
        return -1.0 + self.dt * (np.arange(self.n_t) + 0.5)

    @property
    def t_faces(self) -> np.ndarray:
        """All faces including the boundary ones at ``t = +-1``."""
        return -1.0 + self.dt * np.arange(self.n_t + 1)

    def weight(self, s, t):
        s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
        a = self.alpha(s)
        return np.exp(-2 * self.eps * t * a.real) * (1.0 - self.eps * t * self.profile.kappa(s))

    def weight_ratio_bound(self) -> float:
        """``exp(4 eps sup|Re alpha|) (1 + eps sup|kappa|) / (1 - eps sup|kappa|)``."""
        e, k = self.eps, self.profile.abs_max
        return math.exp(4 * e * self.alpha.sup_real) * (1 + e * k) / (1 - e * k)

    def weight_ratio(self) -> float:
        """``max w / min w`` over the cell centres and faces of the grid."""
        S, T = np.meshgrid(self.s, np.union1d(self.t, self.t_faces), indexing="ij")
        w = self.weight(S, T)
        return float(w.max() / w.min())

    def conjugate(self) -> "ComplexRobinModel":
        return replace(self, alpha=self.alpha.conjugate())


# ---------------------------------------------------------------------------
# assembly


def _idx(model, j, i):
    return (np.asarray(j) % model.n_s) * model.n_t + np.asarray(i)


def _coo(n, parts):
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([np.asarray(p[2], dtype=complex) for p in parts])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _s_term(model: ComplexRobinModel) -> sp.csr_matrix:
    """``sum_f G w ds dt |X_f phi|^2`` with ``X_f`` the shifted difference."""
    p, eps, ds, dt = model.profile, model.eps, model.ds, model.dt
    s_f = model.s + 0.5 * ds
    S, T = np.meshgrid(s_f, model.t, indexing="ij")
    wt = 1.0 - eps * T * p.kappa(S)
    c = (model.weight(S, T) / wt**2 * ds * dt).ravel()
    beta = (eps * T * model.alpha.derivative(S)).ravel()
    xa = -1.0 / ds - 0.5 * beta
    xb = 1.0 / ds - 0.5 * beta
    J, I = np.meshgrid(np.arange(model.n_s), np.arange(model.n_t), indexing="ij")
    a = _idx(model, J, I).ravel()
    b = _idx(model, J + 1, I).ravel()
    n = model.n_s * model.n_t
    return _coo(n, [
        (a, a, c * np.conj(xa) * xa), (b, b, c * np.conj(xb) * xb),
        (a, b, c * np.conj(xa) * xb), (b, a, c * np.conj(xb) * xa),
    ])


def _interior_faces(model):
    J, F = np.meshgrid(np.arange(model.n_s), np.arange(model.n_t - 1), indexing="ij")
    lo = _idx(model, J, F).ravel()
    hi = _idx(model, J, F + 1).ravel()
    wf = model.weight(model.s[J], model.t_faces[F + 1]).ravel()
    return J.ravel(), lo, hi, wf


def _t_term(model, wf=None, lo=None, hi=None) -> sp.csr_matrix:
    if wf is None:
        _, lo, hi, wf = _interior_faces(model)
    c = wf * model.ds / (model.eps**2 * model.dt)
    n = model.n_s * model.n_t
    return _coo(n, [(lo, lo, c), (hi, hi, c), (lo, hi, -c), (hi, lo, -c)])


def _skew_term(model) -> sp.csr_matrix:
    """``(2i/eps) Im(alpha) w_f conj(avg phi) (diff psi)`` at interior faces."""
    J, lo, hi, wf = _interior_faces(model)
    h = 2j * model.alpha(model.s[J]).imag / model.eps * wf * model.ds / 2
    n = model.n_s * model.n_t
    return _coo(n, [(lo, hi, h), (lo, lo, -h), (hi, hi, h), (hi, lo, -h)])


def potential_eps(model: ComplexRobinModel) -> np.ndarray:
    """Discrete ``V_eps`` on the nodes, shape ``(n_s, n_t)``."""
    S, TF = np.meshgrid(model.s, model.t_faces, indexing="ij")
    wf = model.weight(S, TF)
    S2, T2 = np.meshgrid(model.s, model.t, indexing="ij")
    w = model.weight(S2, T2)
    a = model.alpha(S2)
    dw = np.diff(wf, axis=1) / model.dt
    return np.abs(a) ** 2 + a * dw / (model.eps * w)


def potential_eps_exact(model: ComplexRobinModel) -> np.ndarray:
    """Pointwise ``|alpha|^2 - 2 alpha Re(alpha) - alpha kappa / (1 - eps t kappa)``."""
    S, T = np.meshgrid(model.s, model.t, indexing="ij")
    a, k = model.alpha(S), model.profile.kappa(S)
    return np.abs(a) ** 2 - 2 * a * a.real - a * k / (1.0 - model.eps * T * k)


def mass(model: ComplexRobinModel) -> np.ndarray:
    S, T = np.meshgrid(model.s, model.t, indexing="ij")
    return (model.weight(S, T) * model.ds * model.dt).ravel()


@dataclass(frozen=True)
class TransformedPencil:
    A: sp.csr_matrix
    M: np.ndarray
    A_hat: sp.csr_matrix
    M_hat: np.ndarray
    A_eff: sp.csr_matrix
    M_eff: np.ndarray
    K_s: sp.csr_matrix
    K_t: sp.csr_matrix
    shape: tuple[int, int]

    @property
    def pencil(self) -> FormPencil:
        return FormPencil(self.A, self.M, self.shape, {"s": "periodic", "t": "neumann"})

    @property
    def perm(self) -> np.ndarray:
        return self.pencil.perm


def assemble_transformed(model: ComplexRobinModel) -> sp.csr_matrix:
    """Matrix ``A_eps`` with ``Q_eps(phi, psi) = phi^H A_eps psi``."""
    M = mass(model)
    V = potential_eps(model).ravel()
    A = _s_term(model) + _t_term(model) + _skew_term(model) + sp.diags(V * M)
    return A.tocsr()


def assemble_before_parts(model: ComplexRobinModel) -> sp.csr_matrix:
    """The Robin form before integrating the first-order term by parts:
    ``-(1/eps) int (alpha phi d_t conj(phi) + c.c.) w + |alpha|^2 int |phi|^2 w``
    plus the boundary terms ``(1/eps) [alpha w |phi|^2]`` at ``t = +-1``."""
    J, lo, hi, wf = _interior_faces(model)
    a = model.alpha(model.s[J])
    c = -wf * model.ds / model.eps
    n = model.n_s * model.n_t
    # alpha conj(diff phi) avg psi + conj(alpha) conj(avg phi) diff psi
    first = _coo(n, [
        (lo, lo, c * (-a * 0.5 - np.conj(a) * 0.5)),
        (lo, hi, c * (-a * 0.5 + np.conj(a) * 0.5)),
        (hi, lo, c * (a * 0.5 - np.conj(a) * 0.5)),
        (hi, hi, c * (a * 0.5 + np.conj(a) * 0.5)),
    ])
    M = mass(model)
    S = model.s
    a_all = np.repeat(model.alpha(S), model.n_t)
    zero = _idx(model, np.arange(model.n_s), 0)
    last = _idx(model, np.arange(model.n_s), model.n_t - 1)
    bdry = _coo(n, [
        (last, last, model.alpha(S) * model.weight(S, 1.0) * model.ds / model.eps),
        (zero, zero, -model.alpha(S) * model.weight(S, -1.0) * model.ds / model.eps),
    ])
    A = _s_term(model) + _t_term(model) + first + sp.diags(np.abs(a_all) ** 2 * M) + bdry
    return A.tocsr()


def assemble_hat_and_effective(model: ComplexRobinModel):
    """``(A_hat, M_hat, A_eff, M_eff, K_s, K_t)`` in the plain measure.

    ``K_s`` and ``K_t`` are the plain ``s`` and ``t`` stiffness blocks (the
    latter without ``eps^-2``).  ``A_eff`` and ``M_eff`` include the factor
    2 from integrating over ``t``.
    """
    n_s, n_t, ds, dt = model.n_s, model.n_t, model.ds, model.dt
    n = n_s * n_t
    K_s = s_flux_stiffness(np.full((n_s, n_t), dt / ds))
    J, lo, hi, _ = _interior_faces(model)
    c = np.full(lo.size, ds / dt)
    K_t = _coo(n, [(lo, lo, c), (hi, hi, c), (lo, hi, -c), (hi, lo, -c)]).real.tocsr()
    Veff = effective_potential(model.profile, model.alpha, model.s)
    M_hat = np.full(n, ds * dt)
    A_hat = (K_s + K_t / model.eps**2 + sp.diags(np.repeat(Veff, n_t) * ds * dt)).tocsr()
    A_eff = (2 * ds * (periodic_laplacian(n_s, ds) + sp.diags(Veff))).tocsr()
    M_eff = np.full(n_s, 2 * ds)
    return A_hat, M_hat, A_eff, M_eff, K_s.tocsr(), K_t


def assemble_all(model: ComplexRobinModel) -> TransformedPencil:
    A = assemble_transformed(model)
    A_hat, M_hat, A_eff, M_eff, K_s, K_t = assemble_hat_and_effective(model)
    return TransformedPencil(A, mass(model), A_hat, M_hat, A_eff, M_eff, K_s, K_t,
                             (model.n_s, model.n_t))


def extension(model: ComplexRobinModel) -> sp.csr_matrix:
    """Constant-in-``t`` extension ``Ext`` (``n x n_s``)."""
    n = model.n_s * model.n_t
    return sp.csr_matrix((np.ones(n), (np.arange(n), np.repeat(np.arange(model.n_s), model.n_t))),
                         shape=(n, model.n_s))


def t_average(model: ComplexRobinModel, x: np.ndarray) -> np.ndarray:
    return 0.5 * model.dt * x.reshape(model.n_s, model.n_t).sum(axis=1)


# ---------------------------------------------------------------------------
# resolvent comparison


@dataclass(frozen=True)
class ResolventRecord:
    eps: float
    z: complex
    diff_norm: float
    smin_full: float
    smin_eff: float
    weight_ratio: float

    @property
    def diff_norm_over_eps(self) -> float:
        return self.diff_norm / self.eps


def resolvent_difference_norm(model: ComplexRobinModel, z: complex, *,
                              pencils: Optional[TransformedPencil] = None,
                              tol: float = 1e-9) -> ResolventRecord:
    """``||(L - z)^-1 - Ext (L_eff - z)^-1 Avg||`` in the weighted space.

    The plain ``L^2`` norm differs by at most ``sqrt(weight_ratio)``, which
    is recorded alongside.
    """
    P = pencils or assemble_all(model)
    z = complex(z)
    Az = (P.A - z * sp.diags(P.M)).tocsr()
    Ez = (P.A_eff - z * sp.diags(P.M_eff)).tocsr()
    smin_full = smallest_singular(Az, perm=P.perm)
    smin_eff = smallest_singular(Ez)
    if smin_full <= SMIN_FLOOR or smin_eff <= SMIN_FLOOR:
        raise InSpectrumError(f"z = {z} is numerically in the spectrum "
                              f"(smin {smin_full:.3g}, {smin_eff:.3g})")
    lu = factorize(Az, P.perm)
    lu_eff = factorize(Ez)
    E = extension(model)
    M, Mh = P.M, P.M_hat

    def apply(x):
        return lu.solve(M * x) - E @ lu_eff.solve(E.T @ (Mh * x))

    def adjoint(y):
        # weighted adjoint M^-1 R^H M
        My = M * y
        return lu.solve_adjoint(My) - Mh * (E @ lu_eff.solve_adjoint(E.T @ My)) / M

    nrm = operator_norm(apply, adjoint, M.size, tol, weight=M, dtype=complex, method="lanczos")
    return ResolventRecord(model.eps, z, nrm, smin_full, smin_eff, model.weight_ratio())


@dataclass(frozen=True)
class ResolventFit:
    z: complex
    eps: np.ndarray
    norms: np.ndarray
    fit: SlopeFit


def resolvent_fit(template: ComplexRobinModel, eps_list: Sequence[float], z: complex,
                  records: Optional[Sequence[ResolventRecord]] = None) -> ResolventFit:
    eps = np.asarray(eps_list, dtype=float)
    if records is None:
        records = [resolvent_difference_norm(replace(template, eps=float(e)), z) for e in eps]
    norms = np.array([r.diff_norm for r in records])
    return ResolventFit(complex(z), eps, norms, fit_slope(zip(eps, norms)))


def effective_spectrum(model: ComplexRobinModel) -> np.ndarray:
    """All eigenvalues of ``M_eff^-1 A_eff`` (dense; ``n_s`` is small)."""
    _, _, A_eff, M_eff, _, _ = assemble_hat_and_effective(model)
    return np.linalg.eigvals(A_eff.toarray() / M_eff[:, None])


# ---------------------------------------------------------------------------
# accretivity, conjugation symmetry, variational estimate


@dataclass(frozen=True)
class AccretivityRecord:
    eps: float
    M: float
    c0_estimate: float
    holds: bool


def default_shift(model: ComplexRobinModel) -> float:
    return 10.0 * (1.0 + model.alpha.sup_abs**2)


def accretivity_check(model: ComplexRobinModel, M: Optional[float] = None) -> AccretivityRecord:
    """Smallest eigenvalue of ``(Herm A + M M_eps, K_s + eps^-2 K_t + M_eps)``.

    ``Herm A`` is the matrix of ``Re Q_eps``; ``K_s``, ``K_t`` are the plain
    stiffness blocks.  ``lambda* > 0`` is the discrete accretivity bound with
    ``c0 = lambda*``.
    """
    if M is None:
        M = default_shift(model)
    P = assemble_all(model)
    H = 0.5 * (P.A + P.A.conj().T)
    Me = sp.diags(P.M)
    left = (H + M * Me).tocsr()
    right = (P.K_s + P.K_t / model.eps**2 + Me).tocsr()
    lam = hermitian_pencil_smallest(left, right, tol=1e-10)
    return AccretivityRecord(model.eps, float(M), lam, lam > 0)


@dataclass(frozen=True)
class ConjugationRecord:
    max_entry_diff: float
    eig: complex
    eig_conj_model: complex
    eig_gap: float
    holds: bool


def conjugation_symmetry_check(model: ComplexRobinModel, z0: complex = -1.7 - 1.4j, *,
                               tol: float = 1e-14) -> ConjugationRecord:
    """``A(conj alpha) = conj(A(alpha))`` entrywise, and the eigenvalue refined
    near ``z0`` has its conjugate among the eigenvalues of the conjugate model."""
    A = assemble_transformed(model)
    Ac = assemble_transformed(model.conjugate())
    D = (Ac - A.conj()).tocsr()
    scale = max(abs(A).max(), 1.0)
    diff = float(abs(D).max() / scale) if D.nnz else 0.0
    M = mass(model)
    perm = FormPencil(A, M, (model.n_s, model.n_t)).perm
    z0 = complex(z0)
    lam = shifted_inverse_eig(pencil_solver(A, M, z0, perm), z0, 1e-13, weight=M, dim=M.size)
    lam_c = shifted_inverse_eig(pencil_solver(Ac, M, z0.conjugate(), perm), z0.conjugate(), 1e-13,
                                weight=M, dim=M.size)
    gap = abs(lam_c - np.conj(lam))
    return ConjugationRecord(diff, complex(lam), complex(lam_c), float(gap),
                             diff <= tol and gap <= 1e-8 * max(1.0, abs(lam)))


def _trial_vectors(model: ComplexRobinModel, rng: np.random.Generator, m_max: int = 2, n_max: int = 2):
    # half of the trials are t-independent; the rest carry damped t-modes
    if rng.random() < 0.5:
        n_max = 0
    S, T = np.meshgrid(model.s, model.t, indexing="ij")
    out = np.zeros(S.shape, dtype=complex)
    for m in range(-m_max, m_max + 1):
        for n in range(n_max + 1):
            c = rng.standard_normal() + 1j * rng.standard_normal()
            if n > 0:
                c *= 10.0 ** rng.uniform(-3, 0)
            out += c * np.exp(1j * m * S) * np.cos(n * np.pi * (T + 1) / 2)
    return out.ravel()


@dataclass(frozen=True)
class VariationalRecord:
    eps: float
    trials: int
    max_ratio: float


def variational_gap_check(model: ComplexRobinModel, trials: int = 200, *, seed: int = 0,
                          pencils: Optional[TransformedPencil] = None) -> VariationalRecord:
    """Max over seeded smooth trial pairs of
    ``|Q(phi, psi) - Q_hat(phi, psi)| / (||phi||_{hat*} ||psi||_{L})`` with graph
    norms ``||u|| + ||(operator) u||``."""
    if trials < 100:
        raise ValueError("need at least 100 trials")
    P = pencils or assemble_all(model)
    rng = np.random.default_rng([seed, 4301])
    M, Mh = P.M, P.M_hat
    AhH = P.A_hat.conj().T.tocsr()

    def wnorm(x, W):
        return math.sqrt(float(np.real(np.vdot(x, W * x))))

    best = 0.0
    for _ in range(trials):
        phi = _trial_vectors(model, rng)
        psi = _trial_vectors(model, rng)
        d = abs(np.vdot(phi, P.A @ psi) - np.vdot(phi, P.A_hat @ psi))
        n_phi = wnorm(phi, Mh) + wnorm((AhH @ phi) / Mh, Mh)
        n_psi = wnorm(psi, M) + wnorm((P.A @ psi) / M, M)
        best = max(best, d / (n_phi * n_psi))
    return VariationalRecord(model.eps, trials, best)


@dataclass(frozen=True)
class VariationalFit:
    eps: np.ndarray
    max_ratio: np.ndarray
    fit: SlopeFit


def variational_fit(template: ComplexRobinModel, eps_list: Sequence[float], trials: int = 200,
                    seed: int = 0) -> VariationalFit:
    eps = np.asarray(eps_list, dtype=float)
    r = np.array([variational_gap_check(replace(template, eps=float(e)), trials, seed=seed).max_ratio
                  for e in eps])
    return VariationalFit(eps, r, fit_slope(zip(eps, r)))
