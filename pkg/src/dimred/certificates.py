"""Constants and certified resolvent bounds for the abstract reduction.

For ``L = S*S + T`` with transverse gap ``gamma`` and commutator norm
``nu = ||[S, Pi]||`` the comparison with ``L_hat = Pi L Pi + Pi' L Pi'`` is
controlled by ``a = nu / sqrt(gamma)`` through four coefficients
``eta_1 .. eta_4`` depending on ``|z|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

SQRT2 = math.sqrt(2.0)


class GateFailedError(ValueError):
    """``1 - eta_1 * R_hat - eta_2 <= 0``: no certificate is available."""


class OnHalfLineError(ValueError):
    """``z`` lies on the real half-line ``[gamma, inf)``."""


@dataclass(frozen=True)
class ReductionData:
    """Gap ``gamma > 0`` and commutator norm ``nu >= 0``."""

    gamma: float
    nu: float

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        if not (self.nu >= 0 and math.isfinite(self.nu)):
            raise ValueError(f"commutator norm must be non-negative, got {self.nu}")

    @property
    def a(self) -> float:
        return self.nu / math.sqrt(self.gamma)

    @classmethod
    def from_a(cls, a: float, gamma: float) -> "ReductionData":
        return cls(gamma=gamma, nu=a * math.sqrt(gamma))


@dataclass(frozen=True)
class EtaCoefficients:
    z: complex
    eta1: float
    eta2: float
    eta3: float
    eta4: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.eta1, self.eta2, self.eta3, self.eta4)


def eta_coefficients(a: float, gamma: float, z: complex) -> EtaCoefficients:
    """Evaluate the four eta coefficients at ``|z|``."""
    r = abs(z)
    c = 3.0 * a / (gamma * SQRT2) * (2.0 + a / SQRT2)
    eta1 = 3.0 / SQRT2 * a * a * gamma + 6.0 * a / SQRT2 * (1.0 + a) * r + c * r * r
    eta2 = 3.0 * a / SQRT2 * (1.0 + a) + c * r
    eta3 = 3.0 * a / SQRT2 * (1.0 + a / SQRT2) + c * r
    return EtaCoefficients(complex(z), eta1, eta2, eta3, c)


def eta_at(data: ReductionData, z: complex) -> EtaCoefficients:
    return eta_coefficients(data.a, data.gamma, z)


def gate_margin(eta: EtaCoefficients, hat_norm: float) -> float:
    return 1.0 - eta.eta1 * hat_norm - eta.eta2


def gate(eta: EtaCoefficients, hat_norm: float) -> bool:
    """True iff ``1 - eta_1 * R_hat - eta_2 > 0``."""
    if hat_norm < 0:
        raise ValueError("resolvent norm must be non-negative")
    return gate_margin(eta, hat_norm) > 0.0


def certify_resolvent_bound(eta: EtaCoefficients, hat_norm: float) -> float:
    """Certified bound on ``||(L - z)^{-1}||`` from ``R_hat = ||(L_hat - z)^{-1}||``."""
    inv, _ = perturbed_inverse_bounds(eta.eta1, eta.eta2, eta.eta3, eta.eta4, hat_norm)
    return inv


def certify_difference_bound(eta: EtaCoefficients, R: float, hat_norm: float) -> float:
    """``eta_1 R R_hat + eta_2 R + eta_3 R_hat + eta_4``."""
    if R < 0 or hat_norm < 0:
        raise ValueError("norms must be non-negative")
    return eta.eta1 * R * hat_norm + eta.eta2 * R + eta.eta3 * hat_norm + eta.eta4


def half_line_distance(gamma: float, z: complex) -> float:
    z = complex(z)
    if z.real < gamma:
        return abs(z - gamma)
    return abs(z.imag)


def effective_vs_hat_bound(gamma: float, z: complex) -> float:
    """``1 / dist(z, [gamma, inf))``."""
    dist = half_line_distance(gamma, z)
    if dist == 0.0:
        raise OnHalfLineError(f"z = {z} lies on [{gamma}, inf)")
    return 1.0 / dist


def perturbed_inverse_bounds(
    eta1: float, eta2: float, eta3: float, eta4: float, inv_norm_hat: float
) -> tuple[float, Callable[[float], float]]:
    """Inverse bound and difference-bound function of the abstract lemma.

    Returns ``(inverse_bound, diff)`` where ``diff(inv_norm)`` evaluates the
    difference estimate for a measured ``||A^{-1}||``.
    """
    if min(eta1, eta2, eta3, eta4, inv_norm_hat) < 0:
        raise ValueError("coefficients and norms must be non-negative")
    denom = 1.0 - eta1 * inv_norm_hat - eta2
    if not denom > 0.0:
        raise GateFailedError(f"gate margin {denom:.6g} is not positive")
    inverse_bound = ((eta3 + 1.0) * inv_norm_hat + eta4) / denom

    def diff(inv_norm: float) -> float:
        return eta1 * inv_norm * inv_norm_hat + eta2 * inv_norm + eta3 * inv_norm_hat + eta4

    return inverse_bound, diff
