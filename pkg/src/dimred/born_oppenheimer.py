"""Semiclassical two-level Born-Oppenheimer model.

The full operator is ``h^2 D_s^2 + T(s)`` on ``L^2(R, C^2)`` with the fiber
family ``T(s) = R(theta) diag(mu1, mu2) R(theta)^T``.  Its ground fiber
vector ``u1(s) = (cos theta, -sin theta)`` has ``||d_s u1|| = |theta'|``, so
the effective operator is ``h^2 D_s^2 + mu1 + h^2 theta'^2``.  Both are
discretized by second-order finite differences on ``[-R, R]`` with Dirichlet
truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import certificates as cert
from .numkernel import ConvergenceError, SymTridiag, pencil_lowest, sym_tridiag_eigs
from .sweep import SlopeFit, fit_slope


def _default_mu1(s):
    return s * s


def _default_mu2(s):
    return 1.0 + 2.0 * s * s


class WindowError(ValueError):
    """``z`` is outside the admissible window of the resolvent estimate."""


class RefinementError(ConvergenceError):
    pass


@dataclass(frozen=True)
class TwoLevelBOModel:
    """Two-level fiber model.

    ``theta`` defaults to ``theta0 * tanh(s)``; a custom mixing angle must
    come with its derivative ``dtheta`` and the bound ``sup_dtheta``.
    """

    h: float
    theta0: float = 0.3
    R: float = 8.0
    n_s: int = 2001
    mu1: Callable = field(default=_default_mu1, repr=False)
    mu2: Callable = field(default=_default_mu2, repr=False)
    theta: Optional[Callable] = field(default=None, repr=False)
    dtheta: Optional[Callable] = field(default=None, repr=False)
    sup_dtheta: Optional[float] = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.n_s < 1:
            raise ValueError("need at least one grid point")
        if (self.theta is None) != (self.dtheta is None):
            raise ValueError("theta and dtheta must be given together")
        if self.theta is not None and self.sup_dtheta is None:
            raise ValueError("a custom theta needs sup_dtheta")
        if not self.gamma > 0:
            raise ValueError("the spectral gap must be positive")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.n_s + 2)[1:-1]

    @property
    def ds(self) -> float:
        return 2.0 * self.R / (self.n_s + 1)

    def angle(self, s):
        if self.theta is not None:
            return self.theta(s)
        return self.theta0 * np.tanh(s)

    def dangle(self, s):
        if self.dtheta is not None:
            return self.dtheta(s)
        return self.theta0 / np.cosh(s) ** 2

    @property
    def sup_theta_prime(self) -> float:
        if self.sup_dtheta is not None:
            return float(self.sup_dtheta)
        return abs(self.theta0)

    @property
    def gamma(self) -> float:
        """``inf mu2 - inf mu1`` over ``[-R, R]`` (sampled finely, including 0)."""
        s = np.union1d(np.linspace(-self.R, self.R, 20001), [0.0])
        return float(np.min(self.mu2(s)) - np.min(self.mu1(s)))

    @property
    def a(self) -> float:
        return self.h * self.sup_theta_prime / math.sqrt(self.gamma)

    def refined(self, n_s: int) -> "TwoLevelBOModel":
        return replace(self, n_s=n_s)


def fiber_block(model: TwoLevelBOModel, s: float) -> np.ndarray:
    """``R(theta) diag(mu1, mu2) R(theta)^T`` with ``R = [[c, s], [-s, c]]``."""
    th = model.angle(s)
    c, sn = math.cos(th), math.sin(th)
    Rm = np.array([[c, sn], [-sn, c]])
    return Rm @ np.diag([model.mu1(s), model.mu2(s)]) @ Rm.T


def assemble_full(model: TwoLevelBOModel) -> sp.csr_matrix:
    """Sparse symmetric matrix of size ``2 n_s``, site-major (``2 i + c``)."""
    s = model.grid
    n = model.n_s
    k = model.h**2 / model.ds**2
    th = model.angle(s)
    c, sn = np.cos(th), np.sin(th)
    m1, m2 = model.mu1(s), model.mu2(s)
    t11 = c * c * m1 + sn * sn * m2
    t22 = sn * sn * m1 + c * c * m2
    t12 = -c * sn * m1 + c * sn * m2
    i = np.arange(n)
    rows = [2 * i, 2 * i + 1, 2 * i, 2 * i + 1]
    cols = [2 * i, 2 * i + 1, 2 * i + 1, 2 * i]
    vals = [t11 + 2 * k, t22 + 2 * k, t12, t12]
    j = np.arange(n - 1)
    for comp in (0, 1):
        rows += [2 * j + comp, 2 * (j + 1) + comp]
        cols += [2 * (j + 1) + comp, 2 * j + comp]
        vals += [np.full(n - 1, -k), np.full(n - 1, -k)]
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * n, 2 * n)
    ).tocsr()
    return A


def assemble_effective(model: TwoLevelBOModel) -> SymTridiag:
    s = model.grid
    k = model.h**2 / model.ds**2
    diag = 2 * k + model.mu1(s) + model.h**2 * model.dangle(s) ** 2
    return SymTridiag(diag, np.full(model.n_s - 1, -k))


def _full_eigs(model: TwoLevelBOModel, k: int) -> np.ndarray:
    A = assemble_full(model)
    # spectrum starts near h: shifting half a level below keeps the
    # shift-inverted spectrum well separated
    shift = -0.5 * model.h
    M = np.ones(A.shape[0])
    return np.sort(pencil_lowest(A, M, k, shift=shift, tol=1e-10).real)


def _eff_eigs(model: TwoLevelBOModel, k: int) -> np.ndarray:
    return sym_tridiag_eigs(assemble_effective(model), k)


@dataclass(frozen=True)
class BOEigs:
    h: float
    n_s: int
    full: np.ndarray
    eff: np.ndarray
    grid_change: float


def lowest_eigs(model: TwoLevelBOModel, k: int, *, rtol: float = 1e-6, max_n: int = 2**19) -> BOEigs:
    """Lowest ``k`` eigenvalues of the full and effective operators.

    The grid is doubled (``n_s -> 2 n_s + 1``, nodes nested) until every
    eigenvalue changes by less than ``rtol`` relative.
    """
    if not 1 <= k <= 6:
        raise ValueError("k must be between 1 and 6")
    if model.n_s < 3:
        raise ValueError("need at least 3 grid points")
    cur = model
    prev_full, prev_eff = _full_eigs(cur, k), _eff_eigs(cur, k)
    while True:
        nxt = cur.refined(2 * cur.n_s + 1)
        if nxt.n_s > max_n:
            raise RefinementError(f"grid refinement exceeded n_s = {max_n}")
        full, eff = _full_eigs(nxt, k), _eff_eigs(nxt, k)
        change = max(
            np.max(np.abs(full - prev_full) / np.abs(full)),
            np.max(np.abs(eff - prev_eff) / np.abs(eff)),
        )
        cur, prev_full, prev_eff = nxt, full, eff
        if change < rtol:
            return BOEigs(model.h, cur.n_s, full, eff, float(change))


@dataclass(frozen=True)
class GapCheck:
    h: float
    z: complex
    a: float
    hat_bound: float
    gate: bool
    margin: float
    certified_inv: float
    certified_inv_times_h: float
    certified_diff: float


def resolvent_gap_check(
    model: TwoLevelBOModel,
    z: complex,
    *,
    c0: float = 0.4,
    C0: float = 3.0,
    eff_eigs: Optional[np.ndarray] = None,
) -> GapCheck:
    """Certificate for ``||(L_h - z)^{-1}||`` in the window ``[-C0 h, C0 h]``.

    The hat-resolvent norm is bounded by ``1/(c0 h) + 1/(gamma - C0 h)``
    (effective part plus the orthogonal part, which sits above ``gamma``).
    ``eff_eigs`` are the effective eigenvalues used for the distance test;
    they are computed on the model grid when omitted.
    """
    h, g = model.h, model.gamma
    z = complex(z)
    if abs(z.imag) > 0 or abs(z.real) > C0 * h:
        raise WindowError(f"z = {z} is outside [-{C0}h, {C0}h]")
    if C0 * h >= g:
        raise WindowError("C0 h must stay below the gap")
    if eff_eigs is None:
        eff_eigs = _eff_eigs(model, 6)
    if np.min(np.abs(np.asarray(eff_eigs) - z.real)) < c0 * h:
        raise WindowError(f"z = {z} is closer than c0 h to the effective spectrum")
    hat = 1.0 / (c0 * h) + 1.0 / (g - C0 * h)
    eta = cert.eta_at(cert.ReductionData.from_a(model.a, g), z)
    margin = cert.gate_margin(eta, hat)
    if margin > 0:
        inv = cert.certify_resolvent_bound(eta, hat)
        diff = cert.certify_difference_bound(eta, inv, hat)
    else:
        inv = diff = math.nan
    return GapCheck(h, z, model.a, hat, margin > 0, margin, inv, inv * h, diff)


@dataclass(frozen=True)
class BOFit:
    k: int
    h: np.ndarray
    diffs: np.ndarray
    grid_error: np.ndarray
    leading: np.ndarray
    fit: Optional[SlopeFit]
    degenerate: bool


def asymptotic_fit(template: TwoLevelBOModel, h_list: Sequence[float], k: int,
                   *, results: Optional[Sequence[BOEigs]] = None) -> BOFit:
    """Slope of ``log |lambda_k - lambda_eff,k|`` against ``log h``.

    Also returns ``lambda_eff,k(h) / h``.  When any difference is below ten
    times the grid error the fit is marked degenerate and not attempted.
    """
    h_arr = np.asarray(h_list, dtype=float)
    if h_arr.size < 4:
        raise ValueError("need at least 4 values of h")
    ratios = h_arr[1:] / h_arr[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("h values must be geometric")
    if results is None:
        results = [lowest_eigs(replace(template, h=float(h)), k) for h in h_arr]
    diffs = np.array([abs(r.full[k - 1] - r.eff[k - 1]) for r in results])
    err = np.array([r.grid_change * abs(r.full[k - 1]) for r in results])
    leading = np.array([r.eff[k - 1] / r.h for r in results])
    degenerate = bool(np.any(diffs <= 10 * err))
    fit = None if degenerate else fit_slope(zip(h_arr, diffs))
    return BOFit(k, h_arr, diffs, err, leading, fit, degenerate)
