"""Shared geometry types: dimensions, augmented points, and point clouds.

The augmentation dimension may be any positive real, or the distinguished
Gaussian-limit value ``math.inf``.  In the Gaussian limit the scalar anchor
attached to a point is the noise scale sigma itself; at finite augmentation
the anchor and sigma are related by the alignment rule ``anchor = sigma *
sqrt(d_aug)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

GAUSSIAN_LIMIT = math.inf


@dataclass(frozen=True)
class SpaceConfig:
    """Data dimension plus augmentation dimension (finite real or Gaussian limit)."""

    n_data: int
    d_aug: float

    def __post_init__(self):
        if not isinstance(self.n_data, (int, np.integer)) or self.n_data < 1:
            raise ValueError(f"n_data must be a positive integer, got {self.n_data!r}")
        d = self.d_aug
        if not (isinstance(d, (int, float, np.floating, np.integer)) and d > 0):
            raise ValueError(f"d_aug must be a positive real or inf, got {d!r}")
        object.__setattr__(self, "n_data", int(self.n_data))
        object.__setattr__(self, "d_aug", float(d))

    @classmethod
    def gaussian(cls, n_data: int) -> "SpaceConfig":
        return cls(n_data=n_data, d_aug=GAUSSIAN_LIMIT)

    @property
    def is_gaussian(self) -> bool:
        return math.isinf(self.d_aug)

    @property
    def sqrt_d(self) -> float:
        if self.is_gaussian:
            raise ValueError("sqrt_d is undefined in the Gaussian limit")
        return math.sqrt(self.d_aug)

    def sigma_of(self, anchor):
        """Noise scale for a given anchor: anchor / sqrt(d_aug), or the anchor itself in the Gaussian limit."""
        if self.is_gaussian:
            return anchor
        return anchor / self.sqrt_d

    def anchor_of(self, sigma):
        """Anchor for a given noise scale: sigma * sqrt(d_aug), or sigma itself in the Gaussian limit."""
        if self.is_gaussian:
            return sigma
        return sigma * self.sqrt_d

    def target_scale(self, anchor):
        """Multiplier turning a displacement (x - y) into a training target.

        Equals sqrt(d_aug)/anchor at finite augmentation and 1/sigma in the
        Gaussian limit; both are 1/sigma_of(anchor).
        """
        if self.is_gaussian:
            return 1.0 / anchor
        return self.sqrt_d / anchor

    @property
    def log_unit_sphere_area(self) -> float:
        """log S_{n-1}(1) of the full augmented space (dimension n_data + d_aug)."""
        if self.is_gaussian:
            raise ValueError("sphere area is undefined in the Gaussian limit")
        n = self.n_data + self.d_aug
        return math.log(2.0) + 0.5 * n * math.log(math.pi) - gammaln(0.5 * n)

    @property
    def unit_sphere_area(self) -> float:
        return math.exp(self.log_unit_sphere_area)

    def check_vector(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.n_data:
            raise ValueError(
                f"expected a vector of length {self.n_data}, got shape {x.shape}"
            )
        return x


@dataclass(frozen=True)
class AugmentedPoint:
    """A data vector together with its nonnegative scalar anchor."""

    x: np.ndarray
    r: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1:
            raise ValueError(f"x must be a 1-d vector, got shape {x.shape}")
        if not self.r >= 0:
            raise ValueError(f"anchor must be nonnegative, got {self.r!r}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "r", float(self.r))


@dataclass(frozen=True)
class DataCloud:
    """Finite set of clean points carrying uniform weights."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError(f"cloud must be a nonempty (n, dim) array, got shape {pts.shape}")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def diameter(self) -> float:
        pts = self.points
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        return float(np.sqrt(d2.max()))
