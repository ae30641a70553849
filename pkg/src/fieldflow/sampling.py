"""Anchored-ODE generation: node schedule, Heun integration, schedule transfer.

The anchor decreases along a rho-warped sequence from r_max to r_min and then
jumps to exactly zero; the final step is predictor-only, so a T-step run
costs 2T - 1 drift evaluations.  An optional per-step noise injection
stresses the trajectory for robustness studies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import net
from .field import oracle_drift_rows
from .kernel import RadiusLaw, sample_radius, sample_unit_direction
from .space import DataCloud, SpaceConfig
from .training import TrainConfig, ddpm_alpha, sigma_from_t


@dataclass(frozen=True)
class SamplerSchedule:
    """Strictly decreasing anchor nodes r_0 .. r_{T-1} followed by exact zero."""

    r_max: float
    r_min: float
    rho: float
    steps: int
    nodes: np.ndarray

    @property
    def t(self) -> int:
        return self.steps


def build_schedule(r_max: float, r_min: float, rho: float = 7.0, steps: int = 18) -> SamplerSchedule:
    """Warped node sequence; endpoints are pinned to r_max / r_min exactly."""
    if not (r_max > r_min > 0):
        raise ValueError(f"need r_max > r_min > 0, got {r_max!r}, {r_min!r}")
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho!r}")
    if steps < 2:
        raise ValueError(f"need at least 2 steps, got {steps}")
    i = np.arange(steps, dtype=float)
    a, b = r_max ** (1.0 / rho), r_min ** (1.0 / rho)
    nodes = (a + (i / (steps - 1)) * (b - a)) ** rho
    nodes[0] = r_max
    nodes[-1] = r_min
    nodes = np.append(nodes, 0.0)
    if not np.all(np.diff(nodes) < 0):
        raise ValueError("schedule nodes are not strictly decreasing")
    return SamplerSchedule(r_max=float(r_max), r_min=float(r_min), rho=float(rho), steps=int(steps), nodes=nodes)


@dataclass(frozen=True)
class HeunResult:
    """All post-step states (first row is the start) plus the evaluation count."""

    states: np.ndarray
    nodes: np.ndarray
    nfe: int

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def make_drift(backend, space: SpaceConfig):
    """Batched drift callable (X, r) -> slopes from a cloud or a denoiser."""
    if isinstance(backend, DataCloud):
        return lambda X, r: oracle_drift_rows(X, r, backend, space)
    if hasattr(backend, "denoise"):
        return lambda X, r: (np.atleast_2d(X) - np.atleast_2d(backend.denoise(X, r))) / r
    if callable(backend):
        return backend
    raise TypeError(f"no drift backend for {type(backend).__name__}")


def heun_solve(drift, schedule: SamplerSchedule, x0, rng=None, alpha: float = 0.0,
               space: SpaceConfig | None = None) -> HeunResult:
    """Integrate dx/dr from r_max down to zero with Heun's second-order method.

    ``drift`` takes (states, r) and returns slopes.  With alpha > 0, noise
    with per-coordinate standard deviation alpha * sigma_of(r_i) is added at
    the top of every step (rng and space become required).  The corrector is
    skipped on the final step to r = 0.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha > 0 and (rng is None or space is None):
        raise ValueError("noise injection needs an rng and a space")
    if hasattr(x0, "x"):  # a prior draw carrying its anchor
        x0 = x0.x
    x = np.asarray(x0, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x).copy()
    states = [x.copy()]
    nodes = schedule.nodes
    nfe = 0
    for i in range(schedule.steps):
        r_i, r_next = nodes[i], nodes[i + 1]
        if alpha > 0:
            std = float(space.sigma_of(r_i))
            x = x + alpha * std * rng.standard_normal(x.shape)
        d = drift(x, r_i)
        nfe += 1
        x_pred = x + (r_next - r_i) * d
        if r_next > 0:
            d_next = drift(x_pred, r_next)
            nfe += 1
            x = x + (r_next - r_i) * 0.5 * (d + d_next)
        else:
            x = x_pred
        states.append(x.copy())
    stacked = np.stack(states)
    if single:
        stacked = stacked[:, 0, :]
    return HeunResult(states=stacked, nodes=nodes, nfe=nfe)


def ddim_transfer_solve(denoiser, cfg: TrainConfig, rng, steps: int, *, count=None) -> np.ndarray:
    """Deterministic schedule-transferred sampler on the uniform time grid.

    ``denoiser`` takes (states, t) and returns the epsilon-style prediction.
    The start is a heavy-tailed prior draw at the anchor implied by t = 1,
    scaled by sqrt(alpha(1)); the loop then applies the two-coefficient
    update until t = 0.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    space = cfg.space
    sigma_max = float(sigma_from_t(1.0, cfg))
    r_max = float(space.anchor_of(sigma_max))
    n = count if count is not None else 1
    radii = sample_radius(rng, RadiusLaw(space, r_max), size=n)
    dirs = sample_unit_direction(rng, space.n_data, size=n)
    a1 = ddpm_alpha(1.0, cfg)
    x = np.sqrt(a1) * radii[:, None] * dirs
    ts = np.linspace(0.0, 1.0, steps + 1)
    for i in range(steps, 0, -1):
        t_i, t_prev = ts[i], ts[i - 1]
        a_i, a_prev = ddpm_alpha(t_i, cfg), ddpm_alpha(t_prev, cfg)
        ratio = np.sqrt(a_prev / a_i)
        f = np.atleast_2d(denoiser(x, t_i))
        x = ratio * x + (np.sqrt(1.0 - a_prev) - ratio * np.sqrt(1.0 - a_i)) * f
    return x if count is not None else x[0]


def ddpm_network_denoiser(params: dict):
    """Adapt raw network parameters to the (states, t) denoiser signature."""

    def denoiser(x, t):
        X = np.atleast_2d(np.asarray(x, dtype=float))
        inputs = np.concatenate([X, np.full((X.shape[0], 1), float(t))], axis=1)
        out, _ = net.mlp_forward(params, inputs)
        return out

    return denoiser
