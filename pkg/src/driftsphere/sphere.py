"""Directional distributions on the unit sphere S^{d-1}.

Two densities with exact log normalizers and, for the T-style density,
exact sampling:

* ``thp`` -- the heavy-tailed T-style spherical density proportional to
  2 / (kappa (1 - mu^T x)).  Its dot-product marginal t = mu^T x satisfies
  t = 2Z - 1 with Z ~ Beta(alpha, beta), alpha = (d-1)/2, beta = (d-3)/2,
  which is what the sampler draws.  The density is integrable only for
  d >= 4 (the marginal exponent (d-5)/2 must exceed -1).
* ``vmf`` -- von Mises-Fisher, proportional to exp(kappa mu^T x).

Both log-pdfs are densities with respect to the surface measure: a
Monte-Carlo average of exp(log_pdf) over uniform sphere samples, scaled
by the sphere area, integrates to 1.  Note the normalized T-style density
does not depend on kappa at all -- kappa enters the kernel and the
normalizer as the same 1/kappa factor and cancels.  kappa only matters in
the bounded training metric built on the same kernel (see ``metric``),
where the epsilon guard breaks the cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateError, DomainError, ShapeError, SingularityError
from .numerics import (
    log_bessel_i,
    log_gamma,
    log_sphere_area,
    sample_beta,
    sample_uniform_sphere,
)

__all__ = [
    "as_unit_vector",
    "ThpParams",
    "VmfParams",
    "tangent_normal_compose",
    "sample_tangent",
    "thp_log_normalizer",
    "thp_log_pdf",
    "thp_sample",
    "vmf_log_normalizer",
    "vmf_log_pdf",
    "mean_direction",
]

_UNIT_TOL = 1e-9


def as_unit_vector(x, name: str = "x") -> np.ndarray:
    """Validate and return ``x`` as a float64 unit vector."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise ShapeError(f"{name} must be a 1-d vector with dim >= 2, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} has non-finite components")
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > _UNIT_TOL:
        raise DomainError(f"{name} must be unit-norm (|norm-1| <= {_UNIT_TOL}), got norm {norm}")
    return v


def _check_dim(expected: int, x: np.ndarray, name: str = "x") -> None:
    if x.shape[-1] != expected:
        raise ShapeError(f"{name} has dim {x.shape[-1]}, expected {expected}")


@dataclass(frozen=True)
class ThpParams:
    """Center, concentration, and dimension of the T-style spherical law.

    Requires dim >= 4: the tangent-sphere Beta marginal needs
    beta = (d-3)/2 > 0 for the density to be integrable.
    """

    mu: np.ndarray
    kappa: float = 1.0
    dim: int = field(init=False)

    def __post_init__(self):
        mu = as_unit_vector(self.mu, "mu")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "dim", int(mu.shape[0]))
        if self.dim < 4:
            raise DomainError(f"T-style spherical law needs dim >= 4, got {self.dim}")
        if not (self.kappa >= 0.0 and math.isfinite(self.kappa)):
            raise DomainError(f"kappa must be finite and >= 0, got {self.kappa!r}")

    @property
    def alpha(self) -> float:
        return 0.5 * (self.dim - 1)

    @property
    def beta(self) -> float:
        return 0.5 * (self.dim - 3)


@dataclass(frozen=True)
class VmfParams:
    """Center, concentration, and dimension of a von Mises-Fisher law."""

    mu: np.ndarray
    kappa: float = 1.0
    dim: int = field(init=False)

    def __post_init__(self):
        mu = as_unit_vector(self.mu, "mu")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "dim", int(mu.shape[0]))
        if not (self.kappa >= 0.0 and math.isfinite(self.kappa)):
            raise DomainError(f"kappa must be finite and >= 0, got {self.kappa!r}")


def tangent_normal_compose(mu, t: float, v) -> np.ndarray:
    """x = t mu + sqrt(1 - t^2) v for unit mu, unit tangent v, t in [-1, 1]."""
    mu = as_unit_vector(mu, "mu")
    v = as_unit_vector(v, "v")
    _check_dim(mu.shape[0], v, "v")
    t = float(t)
    if not -1.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [-1, 1], got {t}")
    if abs(float(v @ mu)) >= 1e-8:
        raise DomainError("v is not tangent to mu (|v.mu| >= 1e-8)")
    return t * mu + math.sqrt(max(0.0, 1.0 - t * t)) * v


def sample_tangent(mu, rng: np.random.Generator) -> np.ndarray:
    """Uniform unit vector in the tangent hyperplane at mu.

    Draws uniformly on the sphere, projects out the mu component, and
    renormalizes; degenerate projections are redrawn.
    """
    mu = as_unit_vector(mu, "mu")
    d = mu.shape[0]
    while True:
        w = sample_uniform_sphere(d, rng)
        w = w - (w @ mu) * mu
        norm = float(np.linalg.norm(w))
        if norm > 1e-9:
            v = w / norm
            # One re-orthogonalization pass keeps |v.mu| at the 1e-16 level.
            v = v - (v @ mu) * mu
            return v / np.linalg.norm(v)


def thp_log_normalizer(kappa: float, d: int) -> float:
    """ln of the exact surface-measure normalizer of the T-style kernel.

    With alpha = (d-1)/2 and beta = (d-3)/2:

        ln Z = (alpha + beta + 1) ln 2 + alpha ln pi - ln kappa
               + ln Gamma(beta) - ln Gamma(alpha + beta)

    i.e. Z is the tangent-sphere area 2 pi^alpha / Gamma(alpha) times the
    full dot-product marginal integral 2^{alpha+beta} B(alpha, beta) / kappa.
    exp(thp_log_pdf) then integrates to exactly 1 over S^{d-1}, which
    Monte-Carlo and Gauss-Jacobi quadrature both confirm.
    """
    if not (math.isfinite(kappa) and kappa > 0.0):
        raise DomainError(f"kappa must be finite and > 0, got {kappa!r}")
    if int(d) != d or d < 4:
        raise DomainError(f"normalizer diverges for d < 4, got {d!r}")
    d = int(d)
    alpha = 0.5 * (d - 1)
    beta = 0.5 * (d - 3)
    return (
        (alpha + beta + 1.0) * math.log(2.0)
        + alpha * math.log(math.pi)
        - math.log(kappa)
        + log_gamma(beta)
        - log_gamma(alpha + beta)
    )


def thp_log_pdf(params: ThpParams, x) -> float:
    """ln p(x) = ln 2 - ln kappa - ln(1 - mu^T x) - ln Z(kappa, d).

    Diverges as x -> mu; evaluation within 1e-12 of the pole raises
    SingularityError rather than clamping, so a mathematical divergence is
    never mistaken for a numerical one.  After normalization the value is
    independent of kappa (the two ln-kappa terms cancel).
    """
    x = as_unit_vector(x, "x")
    _check_dim(params.dim, x, "x")
    kappa = params.kappa if params.kappa > 0.0 else 1.0  # cancels either way
    t = float(params.mu @ x)
    if t >= 1.0 - 1e-12:
        raise SingularityError(f"density diverges at mu^T x = {t} (pole at 1)")
    return (
        math.log(2.0)
        - math.log(kappa)
        - math.log1p(-t)
        - thp_log_normalizer(kappa, params.dim)
    )


def thp_sample(
    params: ThpParams, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Exact draw(s) from the T-style law via its Beta dot-product marginal.

    t = 2z - 1 with z ~ Beta((d-1)/2, (d-3)/2), v uniform in the tangent
    hyperplane, x = t mu + sqrt(1-t^2) v.  kappa does not influence the
    law (it cancels in the normalized density).
    """
    if size is None:
        z = sample_beta(params.alpha, params.beta, rng)
        t = 2.0 * z - 1.0
        v = sample_tangent(params.mu, rng)
        return tangent_normal_compose(params.mu, t, v)
    z = sample_beta(params.alpha, params.beta, rng, size=size)
    t = 2.0 * z - 1.0
    mu = params.mu
    w = sample_uniform_sphere(params.dim, rng, size=size)
    w = w - np.outer(w @ mu, mu)
    norms = np.linalg.norm(w, axis=1)
    # Degenerate tangent projections have probability zero; renormalize.
    while np.any(norms <= 1e-9):
        bad = norms <= 1e-9
        w[bad] = sample_uniform_sphere(params.dim, rng, size=int(bad.sum()))
        w[bad] -= np.outer(w[bad] @ mu, mu)
        norms = np.linalg.norm(w, axis=1)
    v = w / norms[:, None]
    return t[:, None] * mu[None, :] + np.sqrt(np.maximum(0.0, 1.0 - t * t))[:, None] * v


def vmf_log_normalizer(kappa: float, d: int) -> float:
    """ln C(kappa, d) = (d/2) ln(2 pi) + ln I_{d/2-1}(kappa) - (d/2-1) ln kappa.

    The kappa -> 0 limit is the sphere area, returned exactly at kappa=0.
    """
    if int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    d = int(d)
    if not (math.isfinite(kappa) and kappa >= 0.0):
        raise DomainError(f"kappa must be finite and >= 0, got {kappa!r}")
    if kappa == 0.0:
        return log_sphere_area(d)
    half = 0.5 * d
    return (
        half * math.log(2.0 * math.pi)
        + log_bessel_i(half - 1.0, kappa)
        - (half - 1.0) * math.log(kappa)
    )


def vmf_log_pdf(params: VmfParams, x) -> float:
    """ln p(x) = kappa mu^T x - ln C(kappa, d)."""
    x = as_unit_vector(x, "x")
    _check_dim(params.dim, x, "x")
    return params.kappa * float(params.mu @ x) - vmf_log_normalizer(
        params.kappa, params.dim
    )


def mean_direction(features) -> tuple[np.ndarray, float]:
    """Normalized arithmetic mean of unit vectors and its resultant length.

    Raises DegenerateError when the vectors cancel (zero resultant).
    """
    rows = np.asarray(features, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ShapeError(f"need a non-empty list of vectors, got shape {rows.shape}")
    if not np.all(np.isfinite(rows)):
        raise DomainError("features contain non-finite components")
    mean = rows.mean(axis=0)
    resultant = float(np.linalg.norm(mean))
    if resultant < 1e-12:
        raise DegenerateError("zero resultant: directions cancel")
    return mean / resultant, resultant
