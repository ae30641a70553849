"""Training targets and the exact minimizer they regress toward.

The normalized target for a perturbed pair is (x - y) * sqrt(D) / r, whose
posterior-weighted average over the cloud equals the scaled field exactly;
under the alignment rule r = sigma * sqrt(D) it coincides with the plain
score-matching target (x - y) / sigma.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import net
from .field import log_kernel_rows, posterior_weights
from .space import AugmentedPoint, DataCloud, SpaceConfig

preconditioned_loss = net.loss_and_grad


@dataclass(frozen=True)
class TrainingPair:
    """One clean point, its perturbed counterpart, and the regression target."""

    clean: np.ndarray
    perturbed: AugmentedPoint
    target: np.ndarray


@dataclass(frozen=True)
class TrainingBatch:
    """Column-stacked training pairs; ``sigma`` is the per-row noise scale."""

    clean: np.ndarray
    x: np.ndarray
    r: np.ndarray
    sigma: np.ndarray
    target: np.ndarray

    @classmethod
    def from_pairs(cls, pairs, space: SpaceConfig) -> "TrainingBatch":
        if not pairs:
            raise ValueError("batch must be nonempty")
        r = np.array([p.perturbed.r for p in pairs])
        return cls(
            clean=np.stack([p.clean for p in pairs]),
            x=np.stack([p.perturbed.x for p in pairs]),
            r=r,
            sigma=np.asarray(space.sigma_of(r), dtype=float),
            target=np.stack([p.target for p in pairs]),
        )


def normalized_target(x, y, r: float, space: SpaceConfig) -> np.ndarray:
    """Normalized data-space target (x - y) * sqrt(D) / r.

    The dropped augmentation component is the constant sqrt(D) and is not
    returned.  In the Gaussian limit the scale is 1 / sigma.
    """
    if not r > 0:
        raise ValueError(f"anchor must be positive, got {r!r}")
    x = space.check_vector(x)
    y = space.check_vector(y)
    return (x - y) * space.target_scale(r)


def dsm_target(x, y, sigma: float) -> np.ndarray:
    """Score-matching regression target (x - y) / sigma."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    try:
        np.broadcast_shapes(x.shape, y.shape)
    except ValueError:
        raise ValueError(f"incompatible shapes {x.shape} and {y.shape}") from None
    return (x - y) / sigma


def minimizer_oracle(p: AugmentedPoint, cloud: DataCloud, space: SpaceConfig) -> np.ndarray:
    """Exact conditional expectation of the target: the square-loss minimizer."""
    w = posterior_weights(p, cloud, space)
    scale = space.target_scale(p.r)
    return scale * (p.x - w @ cloud.points)


def stf_target(p: AugmentedPoint, y1, aux, space: SpaceConfig) -> np.ndarray:
    """Large-batch stabilized target over the realized batch {y1} + aux.

    Posterior weights are computed over the batch members only; with an
    empty aux list this reduces exactly to :func:`normalized_target` against y1.
    """
    if not p.r > 0:
        raise ValueError("anchor must be positive")
    y1 = space.check_vector(y1)
    aux = [space.check_vector(a) for a in aux]
    batch = np.stack([y1, *aux])
    lw = log_kernel_rows(p.x, DataCloud(batch), p.r, space)[0]
    w = np.exp(lw - lw.max())
    w /= w.sum()
    return space.target_scale(p.r) * (p.x - w @ batch)
