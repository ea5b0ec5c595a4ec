"""Exact finite-dimensional instances of ``L = S^T S + T``.

``Sigma`` is a finite set of ``n`` sites and every fiber is ``C^m``.  The
transverse operators are stored diagonally (``tau[s, i]``), so the
projection ``Pi`` onto the modes below the thresholds ``gamma_s`` is an
exact coordinate projection and every quantity can be checked against
dense linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import certificates as cert
from .numkernel import jacobi_dense_sym, operator_norm, smallest_singular

TIE_EXCLUSION = 1e-9
SLACK = 1e-9


class TieBreakError(ValueError):
    """A transverse eigenvalue sits within ``1e-9`` of its threshold."""


class InSpectrumError(ValueError):
    """``z`` is (numerically) an eigenvalue of ``L_hat``."""


@dataclass(frozen=True)
class ToyInstance:
    n: int
    m: int
    tau: np.ndarray
    gamma_s: np.ndarray
    S: np.ndarray
    keep: np.ndarray = field(repr=False)
    Pi: np.ndarray = field(repr=False)
    Pi_perp: np.ndarray = field(repr=False)
    T: np.ndarray = field(repr=False)
    L: np.ndarray = field(repr=False)
    L_hat: np.ndarray = field(repr=False)
    L_eff: np.ndarray = field(repr=False)
    L_perp: np.ndarray = field(repr=False)
    gamma: float = 0.0
    nu: float = 0.0

    @property
    def a(self) -> float:
        return self.nu / np.sqrt(self.gamma)

    @property
    def data(self) -> cert.ReductionData:
        return cert.ReductionData(self.gamma, self.nu)

    @property
    def dim(self) -> int:
        return self.n * self.m

    def commutator(self) -> np.ndarray:
        return self.S @ self.Pi - self.Pi @ self.S

    def Q(self, phi, psi) -> complex:
        """``<S phi, S psi> + <phi, T psi>``."""
        return np.vdot(self.S @ phi, self.S @ psi) + np.vdot(phi, self.T @ psi)

    def Q_hat(self, phi, psi) -> complex:
        P, Pp = self.Pi, self.Pi_perp
        return self.Q(P @ phi, P @ psi) + self.Q(Pp @ phi, Pp @ psi)


def build(n: int, m: int, tau, gamma_s, S, *, nu_tol: float = 1e-10, seed: int = 0) -> ToyInstance:
    """Assemble every derived operator of a toy instance.

    ``tau`` has shape ``(n, m)`` and ``S`` shape ``(n*m, n*m)``; coordinates
    are site-major.
    """
    tau = np.array(tau, dtype=float).reshape(n, m)
    gamma_s = np.array(gamma_s, dtype=float).reshape(n)
    S = np.array(S, dtype=float)
    if S.shape != (n * m, n * m):
        raise ValueError(f"S must be {n*m}x{n*m}, got {S.shape}")
    if np.any(tau < 0):
        raise ValueError("transverse eigenvalues must be non-negative")
    if not np.min(gamma_s) > 0:
        raise ValueError("thresholds gamma_s must be positive")
    if np.any(np.abs(tau - gamma_s[:, None]) < TIE_EXCLUSION):
        raise TieBreakError("a transverse eigenvalue lies within 1e-9 of its threshold")
    keep = (tau < gamma_s[:, None]).ravel()
    Pi = np.diag(keep.astype(float))
    Pi_perp = np.eye(n * m) - Pi
    T = np.diag(tau.ravel())
    L = S.T @ S + T
    L_hat = Pi @ L @ Pi + Pi_perp @ L @ Pi_perp
    L_eff = L[np.ix_(keep, keep)]
    L_perp = L[np.ix_(~keep, ~keep)]
    C = S @ Pi - Pi @ S
    if np.any(C):
        nu = operator_norm(
            lambda x: C @ x, lambda x: C.T @ x, n * m, nu_tol, seed=seed, method="lanczos"
        )
    else:
        nu = 0.0
    return ToyInstance(
        n=n, m=m, tau=tau, gamma_s=gamma_s, S=S, keep=keep, Pi=Pi, Pi_perp=Pi_perp,
        T=T, L=L, L_hat=L_hat, L_eff=L_eff, L_perp=L_perp,
        gamma=float(np.min(gamma_s)), nu=float(nu),
    )


def random_instance(
    rng: np.random.Generator,
    *,
    n_max: int = 5,
    m_max: int = 4,
    scale: Optional[float] = None,
) -> ToyInstance:
    """Seeded random instance.

    ``S`` has i.i.d. uniform ``[-1, 1]`` entries times ``scale``; when
    ``scale`` is not given it is drawn log-uniformly in ``[10^-3.5, 10^0.5]``
    so that ``a`` ranges from near zero to a few units.
    """
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    gamma_s = rng.uniform(0.5, 2.0, size=n)
    tau = rng.uniform(0.0, 4.0, size=(n, m))
    # keep clear of the thresholds
    close = np.abs(tau - gamma_s[:, None]) < 1e-6
    tau[close] += 1e-3
    if scale is None:
        scale = 10.0 ** rng.uniform(-3.5, 0.5)
    S = scale * rng.uniform(-1.0, 1.0, size=(n * m, n * m))
    return build(n, m, tau, gamma_s, S, seed=int(rng.integers(2**31)))


def random_pair(inst: ToyInstance, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """A complex test pair, sometimes concentrated on ``ran Pi`` or ``ran Pi'``."""
    N = inst.dim

    def one():
        v = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        kind = rng.integers(4)
        if kind == 1:
            v = inst.Pi @ v
        elif kind == 2:
            v = inst.Pi_perp @ v
        elif kind == 3:
            v = inst.Pi @ v + 1e-3 * (inst.Pi_perp @ v)
        if not np.any(v):
            v = rng.standard_normal(N) + 0j
        return v

    return one(), one()


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    holds: bool


def check_variational_bound(inst: ToyInstance, phi, psi) -> InequalityCheck:
    """Variational comparison bound at ``z = 0`` (both sides divided by gamma)."""
    g, a = inst.gamma, inst.a
    lhs = abs(inst.Q(phi, psi) - inst.Q_hat(phi, psi)) / g
    nphi, npsi = np.linalg.norm(phi), np.linalg.norm(psi)
    Lphi = np.linalg.norm(inst.L @ phi)
    Lhpsi = np.linalg.norm(inst.L_hat @ psi)
    c = 3.0 * a / np.sqrt(2.0)
    rhs = c * (nphi + Lphi / g) * Lhpsi / g + c * (
        a * nphi + (1.0 + a / np.sqrt(2.0)) * Lphi / g
    ) * (npsi + Lhpsi / g)
    return InequalityCheck(float(lhs), float(rhs), bool(lhs <= rhs * (1.0 + SLACK)))


def check_form_bound(inst: ToyInstance, z: complex, phi, psi) -> InequalityCheck:
    eta = cert.eta_at(inst.data, z)
    lhs = abs(inst.Q(phi, psi) - inst.Q_hat(phi, psi))
    nphi, npsi = np.linalg.norm(phi), np.linalg.norm(psi)
    r_phi = np.linalg.norm(inst.L @ phi - z * phi)
    r_psi = np.linalg.norm(inst.L_hat @ psi - np.conj(z) * psi)
    rhs = (
        eta.eta1 * nphi * npsi
        + eta.eta2 * nphi * r_psi
        + eta.eta3 * r_phi * npsi
        + eta.eta4 * r_phi * r_psi
    )
    return InequalityCheck(float(lhs), float(rhs), bool(lhs <= rhs * (1.0 + SLACK)))


@dataclass(frozen=True)
class CertificateRecord:
    z: complex
    a: float
    hat_norm: float
    gate: bool
    margin: float
    in_resolvent: bool
    certified_inv: float
    exact_inv: float
    certified_diff: float
    exact_diff: float
    sound: bool


def spectra(inst: ToyInstance) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of ``L`` and ``L_hat`` from the Jacobi oracle."""
    return jacobi_dense_sym(inst.L), jacobi_dense_sym(inst.L_hat)


def check_certificates(
    inst: ToyInstance,
    z: complex,
    *,
    spectra_cache: Optional[tuple[np.ndarray, np.ndarray]] = None,
    smin_floor: float = 1e-10,
) -> CertificateRecord:
    """Compare the certified bounds with exact resolvent norms at ``z``.

    ``L`` and ``L_hat`` are symmetric, so their resolvent norms are
    ``1 / min |lambda - z|`` over the Jacobi spectra.  The difference norm is
    the spectral norm of the dense difference matrix.  ``sound`` requires,
    when the gate passes, that ``z`` is in the resolvent set of ``L`` and
    both exact norms sit below their certificates; the difference is checked
    both against the a-priori certificate (built from ``certified_inv``) and
    against the sharper bound evaluated at the exact ``||(L - z)^{-1}||``.
    """
    z = complex(z)
    N = inst.dim
    I = np.eye(N)
    if smallest_singular(inst.L_hat - z * I) <= smin_floor * max(1.0, np.abs(inst.L_hat).max()):
        raise InSpectrumError(f"z = {z} is in the spectrum of L_hat")
    lam, lam_hat = spectra_cache if spectra_cache is not None else spectra(inst)
    hat_norm = 1.0 / np.min(np.abs(lam_hat - z))
    eta = cert.eta_at(inst.data, z)
    margin = cert.gate_margin(eta, hat_norm)
    passed = margin > 0.0
    dist = np.min(np.abs(lam - z))
    in_res = dist > 0.0
    exact_inv = 1.0 / dist if in_res else np.inf
    if in_res:
        D = np.linalg.inv(inst.L - z * I) - np.linalg.inv(inst.L_hat - z * I)
        exact_diff = float(np.linalg.norm(D, 2))
    else:
        exact_diff = np.inf
    if passed:
        certified_inv = cert.certify_resolvent_bound(eta, hat_norm)
        certified_diff = cert.certify_difference_bound(eta, certified_inv, hat_norm)
        sharp_diff = cert.certify_difference_bound(eta, exact_inv, hat_norm) if in_res else -1.0
        tol = 1.0 + SLACK
        sound = bool(
            in_res
            and exact_inv <= certified_inv * tol
            and exact_diff <= certified_diff * tol
            and exact_diff <= sharp_diff * tol
        )
    else:
        certified_inv = np.nan
        certified_diff = np.nan
        sound = True
    return CertificateRecord(
        z=z, a=inst.a, hat_norm=float(hat_norm), gate=bool(passed), margin=float(margin),
        in_resolvent=bool(in_res), certified_inv=float(certified_inv), exact_inv=float(exact_inv),
        certified_diff=float(certified_diff), exact_diff=float(exact_diff), sound=sound,
    )


def z_grid(gamma: float, size: int = 5) -> np.ndarray:
    """``size x size`` complex grid covering ``[-gamma, gamma]^2``."""
    x = gamma * np.linspace(-1.0, 1.0, size)
    return (x[None, :] + 1j * x[:, None]).ravel()


@dataclass(frozen=True)
class ToySweepRow:
    index: int
    n: int
    m: int
    gamma: float
    a: float
    variational_max_ratio: float
    variational_holds: bool
    form_bound_max_ratio: float
    form_bound_holds: bool
    gated: int
    certificates_sound: bool
    worst_inv_ratio: float
    worst_diff_ratio: float


def sweep_instance(index: int, seed: int, *, pairs: int = 1, zs: int = 5) -> ToySweepRow:
    """Run every check on one seeded instance; used by the CLI and acceptance tests."""
    rng = np.random.default_rng([seed, index])
    inst = random_instance(rng)
    var_ratio, var_ok = 0.0, True
    form_ratio, form_ok = 0.0, True
    grid = z_grid(inst.gamma, zs)
    for _ in range(pairs):
        phi, psi = random_pair(inst, rng)
        c = check_variational_bound(inst, phi, psi)
        var_ok &= c.holds
        var_ratio = max(var_ratio, _ratio(c))
        z = grid[rng.integers(grid.size)]
        c = check_form_bound(inst, z, phi, psi)
        form_ok &= c.holds
        form_ratio = max(form_ratio, _ratio(c))
    cache = spectra(inst)
    gated, sound = 0, True
    worst_inv, worst_diff = 0.0, 0.0
    for z in grid:
        try:
            rec = check_certificates(inst, z, spectra_cache=cache)
        except InSpectrumError:
            continue
        sound &= rec.sound
        if rec.gate:
            gated += 1
            worst_inv = max(worst_inv, rec.exact_inv / rec.certified_inv)
            if rec.certified_diff > 0:
                worst_diff = max(worst_diff, rec.exact_diff / rec.certified_diff)
    return ToySweepRow(
        index=index, n=inst.n, m=inst.m, gamma=inst.gamma, a=inst.a,
        variational_max_ratio=var_ratio, variational_holds=bool(var_ok),
        form_bound_max_ratio=form_ratio, form_bound_holds=bool(form_ok),
        gated=gated, certificates_sound=bool(sound),
        worst_inv_ratio=worst_inv, worst_diff_ratio=worst_diff,
    )


def _ratio(c: InequalityCheck) -> float:
    if c.rhs > 0:
        return c.lhs / c.rhs
    return 0.0 if c.lhs == 0 else np.inf
