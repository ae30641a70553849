"""Training loops: noise-scale sampling, pair construction, and the main loop.

The anchor distribution is realized implicitly: draw sigma from the
log-normal training law, then set r = sigma * sqrt(D).  Per-iteration child
RNG streams (derived from the run seed and the iteration index) keep the
draw positions of clean index, sigma, direction, and the leading Gamma
variate identical between finite and Gaussian-limit runs, so matched seeds
produce matched batches up to the radius concentration error.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import net
from .kernel import sample_unit_direction
from .space import AugmentedPoint, DataCloud, SpaceConfig
from .targets import TrainingBatch, TrainingPair


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    space: SpaceConfig
    p_mean: float = -1.2
    p_std: float = 1.2
    batch: int = 256
    iterations: int = 20_000
    seed: int = 0
    lr: float = 1e-3
    ema_decay: float = 0.999
    widths: tuple = net.DEFAULT_WIDTHS
    sigma_data: float = 0.5
    beta_bar_min: float = 0.1
    beta_bar_max: float = 20.0

    def __post_init__(self):
        if not self.p_std >= 0:
            raise ValueError("p_std must be nonnegative")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass
class TrainResult:
    params: dict
    ema_params: dict
    trace: list  # rows of (iteration, loss, sigma_mean)
    precond: net.Preconditioner

    def denoiser(self, space: SpaceConfig, *, use_ema: bool = True) -> net.NetworkDenoiser:
        return net.NetworkDenoiser(self.ema_params if use_ema else self.params, self.precond, space)


def _iter_rng(seed: int, tag: int, iteration: int = 0):
    return np.random.default_rng(np.random.SeedSequence([seed, tag, iteration]))


def sample_sigma(rng, cfg: TrainConfig, size=None):
    """Log-normal noise-scale draw exp(Normal(p_mean, p_std^2))."""
    z = rng.standard_normal(size)
    return np.exp(cfg.p_mean + cfg.p_std * z)


def _perturb_columns(rng, Y: np.ndarray, sigma: np.ndarray, space: SpaceConfig):
    """Perturb rows of Y at per-row sigma; returns (x, anchor).

    Draw order is fixed (directions, leading Gamma, trailing Gamma) so the
    finite and Gaussian-limit branches consume the same stream positions for
    everything except the trailing Gamma.
    """
    b, n = Y.shape
    u = sample_unit_direction(rng, n, size=b)
    ga = rng.gamma(0.5 * n, 1.0, size=b)
    if space.is_gaussian:
        radii = sigma * np.sqrt(2.0 * ga)
        anchor = sigma
    else:
        gb = rng.gamma(0.5 * space.d_aug, 1.0, size=b)
        anchor = sigma * space.sqrt_d
        radii = anchor * np.sqrt(ga / gb)
    return Y + radii[:, None] * u, anchor


def make_training_batch(rng, cloud: DataCloud, cfg: TrainConfig) -> TrainingBatch:
    """One vectorized batch: uniform clean rows, sigma draws, kernel noise."""
    idx = rng.integers(0, cloud.n, size=cfg.batch)
    sigma = sample_sigma(rng, cfg, size=cfg.batch)
    Y = cloud.points[idx]
    x, anchor = _perturb_columns(rng, Y, sigma, cfg.space)
    target = (x - Y) / sigma[:, None]
    return TrainingBatch(clean=Y, x=x, r=anchor, sigma=sigma, target=target)


def make_training_pair(rng, cloud: DataCloud, cfg: TrainConfig) -> TrainingPair:
    """Single training pair with the same draw order as the batched path."""
    one = replace(cfg, batch=1)
    b = make_training_batch(rng, cloud, one)
    return TrainingPair(
        clean=b.clean[0],
        perturbed=AugmentedPoint(x=b.x[0], r=float(b.r[0])),
        target=b.target[0],
    )


def train(cloud: DataCloud, cfg: TrainConfig) -> TrainResult:
    """Run the preconditioned square-loss loop; returns parameters, EMA, trace."""
    if cloud.dim != cfg.space.n_data:
        raise ValueError("cloud dimension does not match the space")
    precond = net.Preconditioner(sigma_data=cfg.sigma_data)
    params = net.init_params(_iter_rng(cfg.seed, 0), cfg.space.n_data, cfg.widths)
    ema = {k: v.copy() for k, v in params.items()}
    adam = net.AdamState(lr=cfg.lr)
    trace = []
    for it in range(cfg.iterations):
        batch = make_training_batch(_iter_rng(cfg.seed, 1, it), cloud, cfg)
        try:
            loss, grads = net.loss_and_grad(params, precond, batch, cfg.space)
        except FloatingPointError as exc:
            raise TrainingDiverged(it, str(exc)) from exc
        params = net.adam_step(adam, params, grads)
        ema = net.ema_update(ema, params, cfg.ema_decay)
        trace.append((it, loss, float(batch.sigma.mean())))
    return TrainResult(params=params, ema_params=ema, trace=trace, precond=precond)


def ddpm_alpha(t, cfg: TrainConfig):
    """Cumulative signal level exp(-t^2 (bmax - bmin) / 2 - t bmin) on [0, 1]."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("t must lie in [0, 1]")
    out = np.exp(-0.5 * t * t * (cfg.beta_bar_max - cfg.beta_bar_min) - t * cfg.beta_bar_min)
    return float(out) if out.ndim == 0 else out


def sigma_from_t(t, cfg: TrainConfig):
    """Noise scale sqrt((1 - alpha_t) / alpha_t) implied by the schedule."""
    a = ddpm_alpha(t, cfg)
    return np.sqrt((1.0 - a) / a)


def make_ddpm_batch(rng, cloud: DataCloud, cfg: TrainConfig):
    """Pairs for the schedule-transferred loop: scaled data, epsilon-style target.

    Returns (inputs, targets) where inputs stack the scaled perturbed rows
    with the raw time coordinate as the trailing column.
    """
    idx = rng.integers(0, cloud.n, size=cfg.batch)
    t = np.clip(rng.uniform(0.0, 1.0, size=cfg.batch), 1e-12, 1.0)
    sigma = sigma_from_t(t, cfg)
    Y = cloud.points[idx]
    x, _ = _perturb_columns(rng, Y, sigma, cfg.space)
    root_a = np.sqrt(ddpm_alpha(t, cfg))
    inputs = np.concatenate([root_a[:, None] * x, t[:, None]], axis=1)
    targets = (x - Y) / sigma[:, None]
    return inputs, targets


def train_ddpm(cloud: DataCloud, cfg: TrainConfig) -> TrainResult:
    """Schedule-transferred variant: raw (unpreconditioned) square loss."""
    if cloud.dim != cfg.space.n_data:
        raise ValueError("cloud dimension does not match the space")
    params = net.init_params(_iter_rng(cfg.seed, 0), cfg.space.n_data, cfg.widths)
    ema = {k: v.copy() for k, v in params.items()}
    adam = net.AdamState(lr=cfg.lr)
    trace = []
    for it in range(cfg.iterations):
        rng = _iter_rng(cfg.seed, 1, it)
        inputs, targets = make_ddpm_batch(rng, cloud, cfg)
        try:
            loss, grads = net.raw_loss_and_grad(params, inputs, targets)
        except FloatingPointError as exc:
            raise TrainingDiverged(it, str(exc)) from exc
        params = net.adam_step(adam, params, grads)
        ema = net.ema_update(ema, params, cfg.ema_decay)
        trace.append((it, loss, float(np.mean(inputs[:, -1]))))
    return TrainResult(params=params, ema_params=ema, trace=trace, precond=net.Preconditioner(cfg.sigma_data))


def smoothed(values, window: int = 100) -> np.ndarray:
    """Trailing moving average used when judging loss traces."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return v
    window = min(window, v.size)
    kernel = np.ones(window) / window
    return np.convolve(v, kernel, mode="valid")
