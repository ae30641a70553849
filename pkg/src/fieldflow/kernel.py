"""Heavy-tailed perturbation kernel: radius law, exact samplers, and the prior.

The kernel around a clean point y is the power law
``p(x | y) propto (||x - y||^2 + r^2)^(-(N + D) / 2)`` with N = n_data and
D = d_aug.  It factorizes into a uniform direction and a scalar radius whose
law is a scaled square-root Beta-prime.  In the Gaussian limit the kernel is
an isotropic normal of scale sigma (the anchor itself), and the radius is a
scaled chi variable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

from .space import AugmentedPoint, SpaceConfig


@dataclass(frozen=True)
class RadiusLaw:
    """Law of the perturbed radius ||x - y|| at a fixed positive anchor."""

    space: SpaceConfig
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"anchor must be positive, got {self.r!r}")
        object.__setattr__(self, "r", float(self.r))


def kernel_log_unnorm(x, y, r: float, space: SpaceConfig) -> float:
    """Unnormalized log kernel density at x around y.

    Finite mode returns -((N + D) / 2) * log(||x - y||^2 + r^2); the Gaussian
    limit returns -||x - y||^2 / (2 sigma^2) with sigma the anchor.  Both are
    meaningful up to an additive constant only.
    """
    x = space.check_vector(x)
    y = space.check_vector(y)
    if not r > 0:
        raise ValueError(f"anchor must be positive, got {r!r}")
    d2 = float(np.sum((x - y) ** 2))
    if space.is_gaussian:
        return -d2 / (2.0 * r * r)
    return -0.5 * (space.n_data + space.d_aug) * np.log(d2 + r * r)


def radius_log_pdf(radii, law: RadiusLaw) -> np.ndarray:
    """Log of the normalized radius density, stable for large d_aug and anchors."""
    R = np.asarray(radii, dtype=float)
    if np.any(R <= 0):
        raise ValueError("radius must be positive")
    n = law.space.n_data
    r = law.r
    if law.space.is_gaussian:
        # chi law with scale sigma = r
        return (
            np.log(2.0)
            + (n - 1) * np.log(R)
            - (R * R) / (2.0 * r * r)
            - 0.5 * n * np.log(2.0 * r * r)
            - gammaln(0.5 * n)
        )
    d = law.space.d_aug
    # log of 2 R^{n-1} r^d / (B(n/2, d/2) (R^2 + r^2)^{(n+d)/2}) rewritten via
    # log1p so the r^d factor never overflows
    return (
        np.log(2.0)
        + (n - 1) * np.log(R)
        - n * np.log(r)
        - betaln(0.5 * n, 0.5 * d)
        - 0.5 * (n + d) * np.log1p((R / r) ** 2)
    )


def radius_pdf(radii, law: RadiusLaw) -> np.ndarray:
    """Normalized density of the perturbed radius; integrates to 1 on (0, inf)."""
    out = np.exp(radius_log_pdf(radii, law))
    if np.ndim(radii) == 0:
        return float(out)
    return out


def sample_radius(rng, law: RadiusLaw, size=None):
    """Draw radii distributed per :func:`radius_pdf`.

    Finite mode draws Beta(n/2, d/2) through the two-Gamma construction (so
    non-integer dimensions are valid) and maps it through r * sqrt(b/(1-b)).
    The Gaussian limit takes the d -> inf value of the same construction,
    where the second Gamma concentrates: R = sigma * sqrt(2 G), G ~ Gamma(n/2).
    """
    n = law.space.n_data
    r = law.r
    ga = rng.gamma(0.5 * n, 1.0, size=size)
    if law.space.is_gaussian:
        return r * np.sqrt(2.0 * ga)
    gb = rng.gamma(0.5 * law.space.d_aug, 1.0, size=size)
    if size is None:
        while gb == 0.0:  # Beta draw of exactly 1; probability zero
            gb = rng.gamma(0.5 * law.space.d_aug, 1.0)
    else:
        while np.any(gb == 0.0):
            bad = gb == 0.0
            gb[bad] = rng.gamma(0.5 * law.space.d_aug, 1.0, size=int(bad.sum()))
    return r * np.sqrt(ga / gb)


def sample_unit_direction(rng, n_data: int, size=None) -> np.ndarray:
    """Uniform direction on the unit sphere in n_data dimensions."""
    if n_data < 1:
        raise ValueError(f"n_data must be >= 1, got {n_data}")
    shape = (n_data,) if size is None else (size, n_data)
    w = rng.standard_normal(shape)
    norm = np.linalg.norm(w, axis=-1, keepdims=True)
    while np.any(norm < 1e-290):  # underflow guard; resample degenerate rows
        bad = norm[..., 0] < 1e-290
        if size is None:
            w = rng.standard_normal(shape)
        else:
            w[bad] = rng.standard_normal((int(bad.sum()), n_data))
        norm = np.linalg.norm(w, axis=-1, keepdims=True)
    return w / norm


def perturb(rng, y, r: float, space: SpaceConfig, *, radius=None, direction=None) -> AugmentedPoint:
    """Sample the kernel around y at anchor r, returning the perturbed point.

    ``radius`` and ``direction`` are deterministic test hooks; when omitted
    the direction is drawn first, then the radius.  A zero anchor returns y
    unchanged.
    """
    y = space.check_vector(y)
    if r < 0:
        raise ValueError(f"anchor must be nonnegative, got {r!r}")
    if r == 0.0:
        return AugmentedPoint(x=y.copy(), r=0.0)
    if direction is None:
        direction = sample_unit_direction(rng, space.n_data)
    else:
        direction = space.check_vector(direction)
    if radius is None:
        radius = sample_radius(rng, RadiusLaw(space, r))
    return AugmentedPoint(x=y + float(radius) * direction, r=float(r))


def perturb_many(rng, y, r: float, space: SpaceConfig, count: int) -> np.ndarray:
    """Vectorized kernel sampling around a single center; returns (count, n_data)."""
    y = space.check_vector(y)
    if r < 0:
        raise ValueError(f"anchor must be nonnegative, got {r!r}")
    if r == 0.0:
        return np.tile(y, (count, 1))
    u = sample_unit_direction(rng, space.n_data, size=count)
    radii = sample_radius(rng, RadiusLaw(space, r), size=count)
    return y + radii[:, None] * u


def sample_prior(rng, r_max: float, space: SpaceConfig, *, count=None):
    """Draw from the prior at anchor r_max: the kernel centered at the origin."""
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max!r}")
    zero = np.zeros(space.n_data)
    if count is None:
        return perturb(rng, zero, r_max, space)
    return perturb_many(rng, zero, r_max, space, count)
