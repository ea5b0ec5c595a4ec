"""Intrinsic geometry of a closed plane curve given by its curvature.

Only the curvature ``kappa(s)`` enters the layer forms, so curves are never
embedded.  The default family is ``kappa(s) = kappa0 + delta * cos(s)`` on
the period ``2 pi``; sampled profiles are interpolated by a periodic cubic
spline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

TWO_PI = 2.0 * np.pi


class TubularError(ValueError):
    """``eps * |t| * max|kappa| >= 1``: the normal map degenerates."""


@dataclass(frozen=True)
class CurveProfile:
    """Periodic curvature profile.

    Parameters
    ----------
    kappa0, delta : float
        Coefficients of ``kappa(s) = kappa0 + delta * cos(s)``.
    period : float
        Length of the curve.  The cosine family assumes ``2 pi``.
    samples : array, optional
        Curvature values on a uniform grid of ``[0, period)``; when given they
        replace the cosine family.
    closed : bool
        Check that ``int kappa ds`` is a multiple of ``2 pi``.
    """

    kappa0: float = 0.0
    delta: float = 0.0
    period: float = TWO_PI
    samples: Optional[np.ndarray] = None
    closed: bool = False
    _spline: Optional[CubicSpline] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.samples is not None:
            k = np.asarray(self.samples, dtype=float)
            if k.ndim != 1 or k.size < 4 or not np.all(np.isfinite(k)):
                raise ValueError("samples must be a finite 1-D array with at least 4 values")
            x = np.linspace(0.0, self.period, k.size + 1)
            spline = CubicSpline(x, np.append(k, k[0]), bc_type="periodic")
            object.__setattr__(self, "samples", k)
            object.__setattr__(self, "_spline", spline)
        elif not np.isclose(self.period, TWO_PI, rtol=0, atol=1e-14):
            raise ValueError("the cosine family needs period 2*pi")
        if self.closed:
            total = self.integral()
            winding = total / TWO_PI
            if abs(winding - round(winding)) > 1e-8:
                raise ValueError(f"int kappa ds = {total:.10g} is not a multiple of 2*pi")

    # -- evaluation ---------------------------------------------------------

    def kappa(self, s):
        s = np.asarray(s, dtype=float)
        if self._spline is not None:
            return self._spline(np.mod(s, self.period))
        return self.kappa0 + self.delta * np.cos(s)

    def dkappa(self, s):
        s = np.asarray(s, dtype=float)
        if self._spline is not None:
            return self._spline(np.mod(s, self.period), 1)
        return -self.delta * np.sin(s)

    def integral(self) -> float:
        if self._spline is not None:
            return float(self._spline.integrate(0.0, self.period))
        return self.kappa0 * self.period

    @property
    def is_flat(self) -> bool:
        if self._spline is not None:
            return bool(np.all(self.samples == 0))
        return self.kappa0 == 0 and self.delta == 0

    @property
    def kappa_max(self) -> float:
        return float(self.kappa(self.argmax))

    @property
    def argmax(self) -> float:
        if self._spline is not None:
            x = np.linspace(0.0, self.period, 64 * self.samples.size, endpoint=False)
            return float(x[np.argmax(self._spline(x))])
        return 0.0 if self.delta >= 0 else float(np.pi)

    @property
    def abs_max(self) -> float:
        if self._spline is not None:
            x = np.linspace(0.0, self.period, 64 * self.samples.size, endpoint=False)
            return float(np.max(np.abs(self._spline(x))))
        return abs(self.kappa0) + abs(self.delta)

    @property
    def hess_at_max(self) -> float:
        """``-kappa''(s*)``; equals ``delta`` for the cosine family."""
        if self._spline is not None:
            return float(-self._spline(self.argmax, 2))
        return abs(self.delta)


def tubular_ok(profile: CurveProfile, eps: float) -> bool:
    """``eps * max|kappa| < 1`` (strict)."""
    return eps * profile.abs_max < 1.0


def _check(profile: CurveProfile, eps: float, s, t):
    k = profile.kappa(s)
    if np.any(eps * np.abs(t) * profile.abs_max >= 1.0):
        raise TubularError(f"eps*|t|*max|kappa| >= 1 for eps={eps}")
    return k


def weight(profile: CurveProfile, eps: float, s, t):
    """Layer weight ``1 - eps t kappa(s)``."""
    k = _check(profile, eps, s, t)
    return 1.0 - eps * np.asarray(t) * k


def metric_factor(profile: CurveProfile, eps: float, s, t):
    """Longitudinal metric ``(1 - eps t kappa(s))^{-2}``."""
    return weight(profile, eps, s, t) ** -2.0
