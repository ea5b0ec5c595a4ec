"""Dirichlet Laplacian on a thin layer of half-thickness ``eps`` around a curve.

In normal coordinates ``(s, t) in [0, 2 pi) x (-1, 1)`` the form is

    eps int G |d_s psi|^2 w + eps^-1 int |d_t psi|^2 w,     mass eps w,

with ``w = 1 - eps t kappa(s)`` and ``G = w^-2``.  Each fiber carries the
Dirichlet operator ``-eps^-2 w^-1 d_t w d_t`` with lowest eigenvalues
``mu_j(s, eps)``; the limit operator on the curve is ``-d_s^2 + V`` with
``V = -kappa^2 / 4``.

Discretization: periodic nodes in ``s``, ``n_t`` interior nodes in ``t`` with
Dirichlet nodes at ``t = +-1``, weights sampled at flux midpoints.  The
transverse stiffness carries the compact fourth-order correction
``K + (eps dt)^2 / 12 K M^-1 K``; it is a polynomial in the fiber operator, so
fiber eigenvectors are unchanged and fiber eigenvalues map as
``lam -> lam + (eps dt)^2 / 12 lam^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import certificates as cert
from .geometry import CurveProfile, TubularError, tubular_ok, weight
from .numkernel import (
    ConvergenceError,
    jacobi_dense_sym,
    pencil_lowest,
    sym_tridiag_eigs_many,
)
from .pencil import (
    FormPencil,
    compress,
    fiber_basis,
    fold_permutation,
    periodic_grid,
    periodic_laplacian,
    projected_commutator_norm,
    s_difference,
    s_flux_stiffness,
    tridiag_ground_states,
)
from .sweep import SlopeFit, fit_slope


class WindowError(ValueError):
    """``z`` violates the window of the resolvent estimate."""


class RefinementError(ConvergenceError):
    pass


@dataclass(frozen=True)
class LayerModel:
    profile: CurveProfile
    eps: float
    n_s: int = 128
    n_t: int = 64

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.n_s < 3 or self.n_t < 2:
            raise ValueError("grid too small")
        if not tubular_ok(self.profile, self.eps):
            raise TubularError(f"eps * max|kappa| >= 1 for eps = {self.eps}")

    @property
    def s(self) -> np.ndarray:
        return periodic_grid(self.n_s, self.profile.period)[0]

    @property
    def ds(self) -> float:
        return self.profile.period / self.n_s

    @property
    def dt(self) -> float:
        return 2.0 / (self.n_t + 1)

    @property
    def t(self) -> np.ndarray:
        return -1.0 + self.dt * np.arange(1, self.n_t + 1)

    @property
    def mu(self) -> float:
        """``min_j mu_1(s_j, eps)`` over the grid."""
        return float(np.min(fiber_eigs(self.profile, self.eps, self.s, self.n_t, 1)))

    def refined(self, s: bool = True) -> "LayerModel":
        """Halve ``dt`` (nested nodes) and, when ``s`` is true, ``ds``."""
        return replace(self, n_s=2 * self.n_s if s else self.n_s, n_t=2 * self.n_t + 1)


# ---------------------------------------------------------------------------
# transverse fibers


def _fiber_parts(profile: CurveProfile, eps: float, s: np.ndarray, n_t: int):
    """Tridiagonal fiber stiffness (diag, off) and mass, one row per ``s``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    dt = 2.0 / (n_t + 1)
    t = -1.0 + dt * np.arange(1, n_t + 1)
    tf = -1.0 + dt * (np.arange(n_t + 1) + 0.5)
    wf = weight(profile, eps, s[:, None], tf[None, :])
    wn = weight(profile, eps, s[:, None], t[None, :])
    kd = (wf[:, :-1] + wf[:, 1:]) / (eps * dt)
    ko = -wf[:, 1:-1] / (eps * dt)
    m = eps * wn * dt
    return kd, ko, m, dt


def _symmetrized(kd, ko, m):
    return kd / m, ko / np.sqrt(m[:, :-1] * m[:, 1:])


def _correct(lam, eps, dt):
    return lam + (eps * dt) ** 2 / 12.0 * lam**2


def fiber_eigs(profile: CurveProfile, eps: float, s, n_t: int, k: int) -> np.ndarray:
    """Lowest ``k`` fiber eigenvalues at every ``s`` (shape ``(len(s), k)``)."""
    kd, ko, m, dt = _fiber_parts(profile, eps, s, n_t)
    d, e = _symmetrized(kd, ko, m)
    return _correct(sym_tridiag_eigs_many(d, e, k), eps, dt)


def fiber_ground_states(profile: CurveProfile, eps: float, s, n_t: int):
    """Ground states ``u`` (rows) normalized by ``sum m u^2 = 1``, positive mean.

    Returns ``(u, m, mu1)`` with the fiber masses ``m`` (without ``ds``).
    """
    kd, ko, m, dt = _fiber_parts(profile, eps, s, n_t)
    u, lam = tridiag_ground_states(kd, ko, m)
    return u, m, _correct(lam, eps, dt)


@dataclass(frozen=True)
class TransverseEig:
    value: float
    refined: float
    extrapolated: float
    error: float


def transverse_eig(profile: CurveProfile, s: float, eps: float, j: int, *, n_t: int = 64) -> TransverseEig:
    """``mu_j(s, eps)`` on ``n_t`` nodes, checked on ``2 n_t + 1`` nodes.

    The scheme is fourth order, so the Richardson value is
    ``(16 fine - coarse) / 15`` and ``error`` is ``|fine - coarse| / 15``.
    """
    if not tubular_ok(profile, eps):
        raise TubularError(f"eps * max|kappa| >= 1 for eps = {eps}")
    if not 1 <= j <= n_t // 4:
        raise ValueError("need 1 <= j <= n_t / 4")
    coarse = float(fiber_eigs(profile, eps, [s], n_t, j)[0, j - 1])
    fine = float(fiber_eigs(profile, eps, [s], 2 * n_t + 1, j)[0, j - 1])
    return TransverseEig(coarse, fine, (16 * fine - coarse) / 15, abs(fine - coarse) / 15)


def curvature_potential(profile: CurveProfile, s):
    return -0.25 * profile.kappa(s) ** 2


# ---------------------------------------------------------------------------
# full pencil


def assemble_full(model: LayerModel) -> FormPencil:
    p, eps, n_s, n_t = model.profile, model.eps, model.n_s, model.n_t
    s, ds = model.s, model.ds
    kd, ko, m, dt = _fiber_parts(p, eps, s, n_t)
    n = n_s * n_t
    # off-diagonals padded with a zero between fibers
    off = np.concatenate([ko, np.zeros((n_s, 1))], axis=1).ravel()[:-1]
    K = sp.diags([off, kd.ravel(), off], [-1, 0, 1], shape=(n, n), format="csr")
    mf = m.ravel()
    Kt = K + (eps * dt) ** 2 / 12.0 * (K @ sp.diags(1.0 / mf) @ K)
    wf = weight(p, eps, (s + 0.5 * ds)[:, None], model.t[None, :])
    As = s_flux_stiffness(eps * dt / (ds * wf))
    A = (As + ds * Kt).tocsr()
    A = 0.5 * (A + A.T)
    return FormPencil(A.tocsr(), ds * mf, (n_s, n_t), {"s": "periodic", "t": "dirichlet"})


def full_eigs(model: LayerModel, k: int, pencil: Optional[FormPencil] = None) -> np.ndarray:
    pencil = pencil or assemble_full(model)
    shift = model.mu - 1.0
    vals = pencil_lowest(pencil.A, pencil.M, k, shift=shift, tol=1e-11, perm=pencil.perm)
    return np.sort(np.real(vals))


def effective_sigma_eigs(profile: CurveProfile, k: int, *, n_s: int = 128) -> np.ndarray:
    s, ds = periodic_grid(n_s, profile.period)
    V = curvature_potential(profile, s)
    A = periodic_laplacian(n_s, ds) + sp.diags(V)
    vals = pencil_lowest(A, np.ones(n_s), k, shift=float(V.min()) - 1.0, tol=1e-11,
                         perm=fold_permutation(n_s, 1))
    return np.sort(np.real(vals))


# ---------------------------------------------------------------------------
# asymptotics


@dataclass(frozen=True)
class LayerResidual:
    eps: float
    k: int
    n_s: int
    n_t: int
    lambda_full: float
    lambda_sigma: float
    residual: float
    grid_error: float


def residuals(profile: CurveProfile, eps: float, k: int, *, n_s: int = 128, n_t: int = 64,
              max_refine: int = 4, rel: float = 0.1) -> list[LayerResidual]:
    """``r_j = lambda_j - pi^2/(4 eps^2) - lambda_j^Sigma`` for ``j = 1..k``.

    The transverse grid is refined (``n_t -> 2 n_t + 1``) until two
    successive levels agree within ``rel`` times the residual for every
    ``j``; the finer level is returned with the change as its grid error.
    The ``s`` grid stays fixed: its error is shared with ``lambda^Sigma``
    computed on the same grid and largely cancels.
    """
    model = LayerModel(profile, eps, n_s, n_t)
    c = math.pi**2 / (4 * eps**2)

    def level(mdl):
        full = full_eigs(mdl, k)
        sig = effective_sigma_eigs(profile, k, n_s=mdl.n_s)
        return full, sig, full - c - sig

    prev = level(model)
    for _ in range(max_refine):
        nxt_model = model.refined(s=False)
        cur = level(nxt_model)
        err = np.abs(cur[2] - prev[2])
        if np.all(err <= rel * np.abs(cur[2])):
            return [LayerResidual(eps, j + 1, nxt_model.n_s, nxt_model.n_t, float(cur[0][j]),
                                  float(cur[1][j]), float(cur[2][j]), float(err[j]))
                    for j in range(k)]
        model, prev = nxt_model, cur
    raise RefinementError(f"residuals at eps = {eps} not resolved after {max_refine} doublings")


@dataclass(frozen=True)
class LayerFit:
    k: int
    eps: np.ndarray
    residual: np.ndarray
    grid_error: np.ndarray
    fit: Optional[SlopeFit]
    degenerate: bool


def asymptotic_fit(profile: CurveProfile, eps_list: Sequence[float], k: int, *,
                   n_s: int = 128, n_t: int = 64, max_refine: int = 4,
                   records: Optional[Sequence[Sequence[LayerResidual]]] = None) -> LayerFit:
    """Log-log slope of ``|r_k(eps)|``.  Flat profiles give ``r_k = 0`` up to
    grid error, reported as a degenerate fit."""
    eps_arr = np.asarray(eps_list, dtype=float)
    if eps_arr.size < 3:
        raise ValueError("need at least 3 values of eps")
    ratios = eps_arr[1:] / eps_arr[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("eps values must be geometric")
    for e in eps_arr:
        if not tubular_ok(profile, e):
            raise TubularError(f"eps * max|kappa| >= 1 for eps = {e}")
    if profile.is_flat:
        res, err = [], []
        for e in eps_arr:
            m = LayerModel(profile, float(e), n_s, n_t)
            lam = full_eigs(m, k)[k - 1]
            r = lam - math.pi**2 / (4 * e**2) - effective_sigma_eigs(profile, k, n_s=n_s)[k - 1]
            res.append(r)
            err.append(abs(r))
        return LayerFit(k, eps_arr, np.array(res), np.array(err), None, True)
    if records is None:
        records = [residuals(profile, float(e), k, n_s=n_s, n_t=n_t, max_refine=max_refine)
                   for e in eps_arr]
    res = np.array([r[k - 1].residual for r in records])
    err = np.array([r[k - 1].grid_error for r in records])
    fit = fit_slope(zip(eps_arr, np.abs(res)))
    return LayerFit(k, eps_arr, res, err, fit, False)


# ---------------------------------------------------------------------------
# resolvent window


def _projector_basis(profile, eps, s, n_t):
    u, m, _ = fiber_ground_states(profile, eps, s, n_t)
    return fiber_basis(u), m.ravel()


def commutator_norm(model: LayerModel, *, tol: float = 1e-10) -> float:
    """``||[S, Pi]||`` with ``S = G^1/2 d_s``.

    ``S`` maps nodes to ``s``-faces; both spaces carry their own weighted
    inner product and fiber projector, the face projector being built from
    fiber ground states at the face positions.
    """
    p, eps, n_s, n_t = model.profile, model.eps, model.n_s, model.n_t
    s, ds = model.s, model.ds
    U, m = _projector_basis(p, eps, s, n_t)
    Uf, mf = _projector_basis(p, eps, s + 0.5 * ds, n_t)
    wf = weight(p, eps, (s + 0.5 * ds)[:, None], model.t[None, :]).ravel()
    # ||S psi||^2 in the face mass reproduces eps int G |d_s psi|^2 w
    S = sp.diags(1.0 / wf) @ s_difference(n_s, n_t, ds)
    return projected_commutator_norm(S, U, ds * m, Uf, ds * mf, tol=tol)


@dataclass(frozen=True)
class LayerWindowCheck:
    eps: float
    z: complex
    mu: float
    gamma: float
    nu: float
    a: float
    a_over_eps2: float
    hat_bound: float
    gate: bool
    margin: float
    certified_inv: float
    certified_diff: float


def effective_matrix(model: LayerModel) -> np.ndarray:
    """Compression of the pencil onto the fiber ground states (orthonormal
    in the weighted product), i.e. the matrix of ``phi -> Q(phi u)``."""
    U, _ = _projector_basis(model.profile, model.eps, model.s, model.n_t)
    return compress(assemble_full(model).A, U, model.ds)


def resolvent_window_check(model: LayerModel, z: complex, *, c0: float = 0.1, C0: float = 2.0,
                           eff_eigs: Optional[np.ndarray] = None) -> LayerWindowCheck:
    """Gate and certified bounds for ``L - mu(eps)`` at ``z`` (absolute spectral
    parameter, the shift by ``mu`` is done here)."""
    mu = model.mu
    z = complex(z)
    zeta = z - mu
    if abs(zeta) > C0:
        raise WindowError(f"|z - mu| = {abs(zeta):.4g} exceeds {C0}")
    if eff_eigs is None:
        eff_eigs = jacobi_dense_sym(effective_matrix(model))
    dist = float(np.min(np.abs(np.asarray(eff_eigs) - z)))
    if dist < c0:
        raise WindowError(f"z is {dist:.4g} from the effective spectrum, below c0 = {c0}")
    mu12 = fiber_eigs(model.profile, model.eps, model.s, model.n_t, 2)
    gamma = float(mu12[:, 1].min() - mu12[:, 0].min())
    nu = commutator_norm(model)
    data = cert.ReductionData(gamma, nu)
    hat = max(1.0 / dist, cert.effective_vs_hat_bound(gamma, zeta))
    eta = cert.eta_at(data, zeta)
    margin = cert.gate_margin(eta, hat)
    if margin > 0:
        inv = cert.certify_resolvent_bound(eta, hat)
        diff = cert.certify_difference_bound(eta, inv, hat)
    else:
        inv = diff = math.nan
    return LayerWindowCheck(model.eps, z, mu, gamma, nu, data.a, data.a / model.eps**2, hat,
                            margin > 0, margin, inv, diff)
