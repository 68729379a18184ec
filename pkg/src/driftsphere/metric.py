"""Training-time similarity metrics on the sphere and angular statistics.

The bounded T-style metric

    L_t(mu, x) = 2 / (kappa (1 - mu^T x) + epsilon)

shares its kernel with the T-style density but adds the epsilon guard
(default 1) that keeps the denominator away from 0, which bounds the
metric in (0, 2/epsilon] and -- unlike the normalized density -- makes it
genuinely kappa-dependent.  Its gradient with respect to the center is
light-tailed: the coefficient 2 kappa / (kappa (1-t) + epsilon)^2 peaks at
2 kappa / epsilon^2, far below the vMF metric's peak kappa e^kappa once
kappa >= 1, so distant samples tug centers around much less than under
exp(kappa mu^T x).  (Pointwise the comparison flips for strongly negative
t at kappa >= 4, where the vMF gradient is exponentially dead; see
``grad_coefficients``.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ShapeError

__all__ = [
    "MetricConfig",
    "thp_metric",
    "vmf_metric",
    "grad_coefficients",
    "angle_deg",
]


@dataclass(frozen=True)
class MetricConfig:
    """Concentration and denominator guard of the T-style metric."""

    kappa: float = 16.0
    epsilon: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.kappa) and self.kappa >= 0.0):
            raise DomainError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise DomainError(f"epsilon must be finite and > 0, got {self.epsilon!r}")


def _dot(mu, x) -> float:
    mu = np.asarray(mu, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if mu.shape != x.shape or mu.ndim != 1:
        raise ShapeError(f"vectors must share one shape, got {mu.shape} vs {x.shape}")
    return float(mu @ x)


def thp_metric_from_dot(t, cfg: MetricConfig):
    """T-style metric as a function of the dot product; accepts arrays."""
    return 2.0 / (cfg.kappa * (1.0 - np.asarray(t, dtype=np.float64)) + cfg.epsilon)


def thp_metric(mu, x, cfg: MetricConfig) -> float:
    """2 / (kappa (1 - mu^T x) + epsilon); in (0, 2/epsilon], increasing in the dot."""
    return float(thp_metric_from_dot(_dot(mu, x), cfg))


def vmf_metric(mu, x, kappa: float) -> float:
    """exp(kappa mu^T x)."""
    return math.exp(kappa * _dot(mu, x))


def grad_coefficients(
    t: float, kappa: float, epsilon: float = 1.0
) -> tuple[float, float]:
    """Scalar magnitudes of dL/dmu along x for both metrics at dot product t.

    Returns (2 kappa / (kappa (1-t) + epsilon)^2, kappa e^{kappa t}); these
    are the exact coefficients c in dL/dmu = c x, verified against central
    finite differences of the metrics.
    """
    t = float(t)
    if not -1.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [-1, 1], got {t}")
    if not (math.isfinite(kappa) and kappa >= 0.0):
        raise DomainError(f"kappa must be finite and >= 0, got {kappa!r}")
    if not (math.isfinite(epsilon) and epsilon > 0.0):
        raise DomainError(f"epsilon must be finite and > 0, got {epsilon!r}")
    c_thp = 2.0 * kappa / (kappa * (1.0 - t) + epsilon) ** 2
    c_vmf = kappa * math.exp(kappa * t)
    return c_thp, c_vmf


def angle_deg(u, v) -> float:
    """Angle between two unit vectors in degrees, clamped against rounding."""
    return math.degrees(math.acos(min(1.0, max(-1.0, _dot(u, v)))))
