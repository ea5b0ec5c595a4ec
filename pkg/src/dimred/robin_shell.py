"""Dirichlet-Robin Laplacian on the shell of width one inside a curve.

In coordinates ``(s, t) in [0, 2 pi) x (0, 1)`` the form is

    int (G |d_s psi|^2 + |d_t psi|^2) w - alpha int |psi(s, 0)|^2 ds,

with ``w = 1 - t kappa(s)``, ``G = w^-2`` and Dirichlet data at ``t = 1``.
For large ``alpha`` the fiber ground energy is ``-alpha^2 - alpha kappa(s)
+ O(1)`` and the effective operator on the curve is ``D_s^2 - alpha kappa``.
Its low eigenvalues follow the harmonic expansion ``-alpha kappa_max +
sqrt(alpha) (2j - 1) sqrt(delta / 2)`` for ``kappa = kappa0 + delta cos s``.

The transverse grid is the image of a uniform grid under
``t = (exp(beta xi) - 1) / (exp(beta) - 1)``, clustering nodes near the
Robin boundary where the ground state decays like ``exp(-alpha t)``.  The
Robin condition enters only through the boundary term of the form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import certificates as cert
from .geometry import CurveProfile
from .numkernel import jacobi_dense_sym, pencil_lowest, sym_tridiag_eigs_many
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


class WeightError(ValueError):
    """``w = 1 - t kappa`` is not positive on the shell."""


class WindowError(ValueError):
    pass


def t_grid(n_t: int, alpha: float) -> np.ndarray:
    """Nodes ``t_0 = 0 < ... < t_{n_t} = 1``; the last one carries Dirichlet data.

    Uniform for ``alpha <= e``, otherwise mapped with ``beta = 1.5 log alpha``.
    """
    xi = np.arange(n_t + 1) / n_t
    if alpha <= math.e:
        return xi
    b = 1.5 * math.log(alpha)
    return np.expm1(b * xi) / math.expm1(b)


@dataclass(frozen=True)
class ShellModel:
    profile: CurveProfile
    alpha: float
    n_s: int = 128
    n_t: int = 160

    def __post_init__(self):
        if self.n_s < 3 or self.n_t < 2:
            raise ValueError("grid too small")
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        check_weight(self.profile)

    @property
    def s(self) -> np.ndarray:
        return periodic_grid(self.n_s, self.profile.period)[0]

    @property
    def ds(self) -> float:
        return self.profile.period / self.n_s

    @property
    def t(self) -> np.ndarray:
        return t_grid(self.n_t, self.alpha)[:-1]

    @property
    def mu(self) -> float:
        return float(np.min(fiber_eigs(self.profile, self.alpha, self.s, self.n_t, 1)))


def check_weight(profile: CurveProfile) -> None:
    if profile.kappa_max >= 1.0:
        raise WeightError(f"1 - t kappa vanishes in the shell (max kappa = {profile.kappa_max})")


# ---------------------------------------------------------------------------
# fibers


def _fiber_parts(profile: CurveProfile, alpha: float, s, n_t: int):
    s = np.atleast_1d(np.asarray(s, dtype=float))
    tn = t_grid(n_t, alpha)
    h = np.diff(tn)
    tc = 0.5 * (tn[:-1] + tn[1:])
    wc = 1.0 - tc[None, :] * profile.kappa(s)[:, None]
    wn = 1.0 - tn[None, :-1] * profile.kappa(s)[:, None]
    if np.any(wc <= 0) or np.any(wn <= 0):
        raise WeightError("1 - t kappa is not positive on the grid")
    flux = wc / h
    kd = flux.copy()
    kd[:, 1:] += flux[:, :-1]
    kd[:, 0] -= alpha
    ko = -flux[:, :-1]
    vol = np.empty(n_t)
    vol[0] = 0.5 * h[0]
    vol[1:] = 0.5 * (h[:-1] + h[1:])
    m = wn * vol
    return kd, ko, m


def fiber_eigs(profile: CurveProfile, alpha: float, s, n_t: int, k: int) -> np.ndarray:
    kd, ko, m = _fiber_parts(profile, alpha, s, n_t)
    d = kd / m
    e = ko / np.sqrt(m[:, :-1] * m[:, 1:])
    return sym_tridiag_eigs_many(d, e, k)


def fiber_ground_states(profile: CurveProfile, alpha: float, s, n_t: int):
    """Ground states normalized by ``sum m u^2 = 1`` with positive mean."""
    kd, ko, m = _fiber_parts(profile, alpha, s, n_t)
    u, lam = tridiag_ground_states(kd, ko, m)
    return u, m, lam


@dataclass(frozen=True)
class RobinEig:
    value: float
    extrapolated: float
    error: float


def transverse_eig_robin(profile: CurveProfile, s: float, alpha: float, j: int, *,
                         n_t: int = 160) -> RobinEig:
    """``mu_j(s, alpha)`` on ``n_t`` cells with two Richardson steps.

    The mapped grid is nested under ``n_t -> 2 n_t``; the scheme is second
    order, so the values on ``n_t, 2 n_t, 4 n_t`` are combined as
    ``(4 f - c) / 3`` and then ``(16 f - c) / 15``.
    """
    if not 1 <= j <= n_t // 4:
        raise ValueError("need 1 <= j <= n_t / 4")
    v = [float(fiber_eigs(profile, alpha, [s], n, j)[0, j - 1]) for n in (n_t, 2 * n_t, 4 * n_t)]
    r1 = [(4 * v[1] - v[0]) / 3, (4 * v[2] - v[1]) / 3]
    ex = (16 * r1[1] - r1[0]) / 15
    return RobinEig(v[0], ex, abs(r1[1] - r1[0]) / 15)


def closed_form_alpha(k: float) -> float:
    """Coupling ``alpha = k coth k`` whose flat fiber has ``mu_1 = -k^2``."""
    return k / math.tanh(k)


def closed_form_k(alpha: float, tol: float = 1e-15) -> float:
    """Invert ``alpha = k coth k`` (``alpha > 1``) by bisection."""
    if not alpha > 1:
        raise ValueError("a negative ground state needs alpha > 1")
    lo, hi = 0.0, alpha + 1.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid == 0 or closed_form_alpha(mid) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# effective operator


def effective_matrix_1d(profile: CurveProfile, alpha: float, n_s: int) -> sp.csr_matrix:
    """Periodic FD matrix of ``-d_s^2 - alpha kappa``."""
    s, ds = periodic_grid(n_s, profile.period)
    return (periodic_laplacian(n_s, ds) - alpha * sp.diags(profile.kappa(s))).tocsr()


def _eff_eigs_grid(profile, alpha, k, n_s):
    A = effective_matrix_1d(profile, alpha, n_s)
    shift = -alpha * profile.abs_max - 1.0
    vals = pencil_lowest(A, np.ones(n_s), k, shift=shift, tol=1e-12, perm=fold_permutation(n_s, 1))
    return np.sort(np.real(vals))


def effective_eigs(profile: CurveProfile, alpha: float, j: int, *, n_s: int = 256,
                   rtol: float = 1e-9, max_n: int = 2**15) -> np.ndarray:
    """Lowest ``j`` eigenvalues of ``D_s^2 - alpha kappa``, Richardson-converged.

    Grids double until two successive Richardson values agree within
    ``rtol * max(1, |nu|)``.
    """
    prev = _eff_eigs_grid(profile, alpha, j, n_s)
    prev_rich = None
    n = n_s
    while 2 * n <= max_n:
        n *= 2
        cur = _eff_eigs_grid(profile, alpha, j, n)
        rich = (4 * cur - prev) / 3
        if prev_rich is not None and np.all(np.abs(rich - prev_rich) <= rtol * np.maximum(1, np.abs(rich))):
            return rich
        prev, prev_rich = cur, rich
    return prev_rich


@dataclass(frozen=True)
class HarmonicFit:
    j: int
    alpha: np.ndarray
    scaled: np.ndarray
    target: float
    deviation: np.ndarray
    fit: Optional[SlopeFit]
    degenerate: bool


def harmonic_target(profile: CurveProfile, j: int) -> float:
    """``(2j - 1) sqrt(H / 2)`` with ``H = -kappa''(s*)``."""
    return (2 * j - 1) * math.sqrt(0.5 * profile.hess_at_max)


def harmonic_fit(profile: CurveProfile, alpha_list: Sequence[float], j: int) -> HarmonicFit:
    """Scaled values ``(nu_j + alpha kappa_max) / sqrt(alpha)`` and the fit of
    their deviation from the oscillator value against ``alpha``."""
    a = np.asarray(alpha_list, dtype=float)
    if a.size < 4:
        raise ValueError("need at least 4 values of alpha")
    ratios = a[1:] / a[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("alpha values must be geometric")
    target = harmonic_target(profile, j)
    scaled = np.array([(effective_eigs(profile, x, j)[j - 1] + x * profile.kappa_max) / math.sqrt(x)
                       for x in a])
    dev = np.abs(scaled - target)
    if profile.hess_at_max == 0:
        return HarmonicFit(j, a, scaled, target, dev, None, True)
    fit = fit_slope(zip(a, dev)) if np.all(dev > 0) else None
    return HarmonicFit(j, a, scaled, target, dev, fit, False)


# ---------------------------------------------------------------------------
# full shell


def assemble_full(model: ShellModel) -> FormPencil:
    p, alpha, n_s, n_t = model.profile, model.alpha, model.n_s, model.n_t
    s, ds = model.s, model.ds
    kd, ko, m = _fiber_parts(p, alpha, s, n_t)
    n = n_s * n_t
    off = np.concatenate([ko, np.zeros((n_s, 1))], axis=1).ravel()[:-1]
    Kt = sp.diags([off, kd.ravel(), off], [-1, 0, 1], shape=(n, n), format="csr")
    tn = t_grid(n_t, alpha)
    h = np.diff(tn)
    vol = np.empty(n_t)
    vol[0] = 0.5 * h[0]
    vol[1:] = 0.5 * (h[:-1] + h[1:])
    wf = 1.0 - tn[None, :-1] * p.kappa(s + 0.5 * ds)[:, None]
    if np.any(wf <= 0):
        raise WeightError("1 - t kappa is not positive on the grid")
    As = s_flux_stiffness(vol[None, :] / (ds * wf))
    A = (As + ds * Kt).tocsr()
    A = 0.5 * (A + A.T)
    return FormPencil(A.tocsr(), ds * m.ravel(), (n_s, n_t), {"s": "periodic", "t": "robin-dirichlet"})


def full_eigs(model: ShellModel, k: int, pencil: Optional[FormPencil] = None) -> np.ndarray:
    """Most negative ``k`` eigenvalues by shift-invert Lanczos below ``mu``
    (a lower bound for the spectrum, since the ``s`` part is nonnegative)."""
    pencil = pencil or assemble_full(model)
    shift = model.mu - 1.0
    vals = pencil_lowest(pencil.A, pencil.M, k, shift=shift, tol=1e-12, perm=pencil.perm)
    return np.sort(np.real(vals))


@dataclass(frozen=True)
class ShellEigs:
    coarse: np.ndarray
    fine: np.ndarray
    extrapolated: np.ndarray
    error: np.ndarray


def full_eigs_extrapolated(model: ShellModel, k: int) -> ShellEigs:
    """Richardson step in ``t`` (``n_t -> 2 n_t``, nested mapped nodes).

    The boundary layer makes the raw ``t`` error grow like ``alpha^4 h^2``;
    one extrapolation removes the leading term.  ``error`` is the size of
    the correction, a conservative bound for what remains.
    """
    c = full_eigs(model, k)
    f = full_eigs(replace(model, n_t=2 * model.n_t), k)
    ex = (4 * f - c) / 3
    return ShellEigs(c, f, ex, np.abs(ex - f))


@dataclass(frozen=True)
class ShellRecord:
    alpha: float
    j: int
    mu1_at_smax: float
    nu_j: float
    lambda_full: float
    shifted_residual: float
    harmonic_scaled: float


def shell_records(profile: CurveProfile, alpha: float, k: int, *, n_s: int = 128,
                  n_t: int = 160) -> list[ShellRecord]:
    model = ShellModel(profile, alpha, n_s, n_t)
    lam = full_eigs_extrapolated(model, k).extrapolated
    nu = effective_eigs(profile, alpha, k)
    mu1 = transverse_eig_robin(profile, profile.argmax, alpha, 1, n_t=n_t).extrapolated
    return [ShellRecord(alpha, j + 1, mu1, float(nu[j]), float(lam[j]),
                        float(lam[j] + alpha**2 - nu[j]),
                        float((nu[j] + alpha * profile.kappa_max) / math.sqrt(alpha)))
            for j in range(k)]


# ---------------------------------------------------------------------------
# resolvent window


@dataclass(frozen=True)
class ShellWindowCheck:
    alpha: float
    z: complex
    mu: float
    gamma: float
    nu: float
    a: float
    a_alpha2: float
    hat_bound: float
    gate: bool
    margin: float
    certified_inv: float
    certified_diff: float
    certified_diff_alpha: float


def _basis(model: ShellModel, s):
    u, m, _ = fiber_ground_states(model.profile, model.alpha, s, model.n_t)
    return fiber_basis(u), m.ravel()


def commutator_norm(model: ShellModel, *, tol: float = 1e-10) -> float:
    p, n_s, n_t, ds = model.profile, model.n_s, model.n_t, model.ds
    s = model.s
    U, m = _basis(model, s)
    Uf, mf = _basis(model, s + 0.5 * ds)
    wf = 1.0 - model.t[None, :] * p.kappa(s + 0.5 * ds)[:, None]
    S = sp.diags(1.0 / wf.ravel()) @ s_difference(n_s, n_t, ds)
    return projected_commutator_norm(S, U, ds * m, Uf, ds * mf, tol=tol)


def effective_matrix(model: ShellModel) -> np.ndarray:
    U, _ = _basis(model, model.s)
    return compress(assemble_full(model).A, U, model.ds)


def resolvent_window_check(model: ShellModel, z: complex, *, c0: float = 0.5, C0: float = 1.0,
                           eff_eigs: Optional[np.ndarray] = None) -> ShellWindowCheck:
    """Gate and certified bounds for ``L - mu(alpha)`` at the absolute ``z``.

    Window: ``|z - mu| <= c0 alpha`` and distance at least ``C0`` from the
    effective spectrum.
    """
    mu = model.mu
    z = complex(z)
    zeta = z - mu
    if abs(zeta) > c0 * model.alpha:
        raise WindowError(f"|z - mu| = {abs(zeta):.4g} exceeds c0 alpha = {c0 * model.alpha:.4g}")
    if eff_eigs is None:
        eff_eigs = jacobi_dense_sym(effective_matrix(model))
    dist = float(np.min(np.abs(np.asarray(eff_eigs) - z)))
    if dist < C0:
        raise WindowError(f"z is {dist:.4g} from the effective spectrum, below C0 = {C0}")
    mu12 = fiber_eigs(model.profile, model.alpha, model.s, model.n_t, 2)
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
    return ShellWindowCheck(model.alpha, z, mu, gamma, nu, data.a, data.a * model.alpha**2, hat,
                            margin > 0, margin, inv, diff, diff * model.alpha)
