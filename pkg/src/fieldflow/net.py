"""Small fully-connected denoiser with hand-rolled reverse-mode gradients.

The raw network F maps (scaled input, noise embedding) -> n_data outputs.
A preconditioning wrapper turns it into a denoiser
``denoise(x, r) = c_skip * x + c_out * F(c_in * x, c_noise)`` with all four
coefficients functions of sigma = sigma_of(anchor).  Training state (Adam
moments, EMA shadow) lives in plain dicts of float64 arrays keyed by layer
name, which keeps checkpoints trivially bit-exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .space import SpaceConfig

DEFAULT_WIDTHS = (128, 128, 128)


@dataclass(frozen=True)
class Preconditioner:
    """Scale functions applied around the raw network."""

    sigma_data: float = 0.5

    def c_in(self, sigma):
        return 1.0 / np.sqrt(sigma**2 + self.sigma_data**2)

    def c_out(self, sigma):
        return sigma * self.sigma_data / np.sqrt(sigma**2 + self.sigma_data**2)

    def c_skip(self, sigma):
        return self.sigma_data**2 / (sigma**2 + self.sigma_data**2)

    def c_noise(self, sigma):
        return 0.25 * np.log(sigma)


def init_params(rng, n_data: int, widths=DEFAULT_WIDTHS) -> dict:
    """Fresh parameter dict: hidden layers 1/sqrt(fan_in) normal, output zeroed."""
    sizes = [n_data + 1, *widths, n_data]
    params = {}
    for i, (fin, fout) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        scale = 0.0 if last else 1.0 / math.sqrt(fin)
        params[f"w{i}"] = scale * rng.standard_normal((fin, fout))
        params[f"b{i}"] = np.zeros(fout)
    return params


def _n_layers(params: dict) -> int:
    return sum(1 for k in params if k.startswith("w"))


def _silu(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s, s


def mlp_forward(params: dict, inputs: np.ndarray):
    """Forward pass on a (batch, n_data + 1) matrix; returns output and cache."""
    a = np.atleast_2d(np.asarray(inputs, dtype=float))
    cache = [("in", a, None)]
    n = _n_layers(params)
    for i in range(n):
        z = a @ params[f"w{i}"] + params[f"b{i}"]
        if i < n - 1:
            a, s = _silu(z)
            cache.append(("silu", z, s))
        else:
            a = z
            cache.append(("lin", z, None))
    return a, cache


def mlp_backward(params: dict, cache, dout: np.ndarray) -> dict:
    """Gradients of sum(dout * output) with respect to every parameter."""
    grads = {}
    g = np.asarray(dout, dtype=float)
    n = _n_layers(params)
    for i in range(n - 1, -1, -1):
        kind, z, s = cache[i + 1]
        if kind == "silu":
            g = g * (s * (1.0 + z * (1.0 - s)))
        a_prev = cache[i][1] if cache[i][0] == "in" else None
        if a_prev is None:
            zp, sp = cache[i][1], cache[i][2]
            a_prev = zp * sp
        grads[f"w{i}"] = a_prev.T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        if i > 0:
            g = g @ params[f"w{i}"].T
    return grads


def _coeffs(precond: Preconditioner, sigma):
    sigma = np.asarray(sigma, dtype=float)
    return (
        precond.c_in(sigma),
        precond.c_out(sigma),
        precond.c_skip(sigma),
        precond.c_noise(sigma),
    )


def denoise(params: dict, precond: Preconditioner, x, r, space: SpaceConfig) -> np.ndarray:
    """Denoised estimate at anchor r: c_skip * x + c_out * F(c_in * x, c_noise)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    r_arr = np.broadcast_to(np.asarray(r, dtype=float), (X.shape[0],))
    if np.any(r_arr <= 0):
        raise ValueError("denoise requires a positive anchor")
    sigma = space.sigma_of(r_arr)
    cin, cout, cskip, cnoise = _coeffs(precond, sigma)
    u = np.concatenate([cin[:, None] * X, cnoise[:, None]], axis=1)
    f, _ = mlp_forward(params, u)
    out = cskip[:, None] * X + cout[:, None] * f
    return out[0] if single else out


def field_estimate(params: dict, precond: Preconditioner, x, r, space: SpaceConfig) -> np.ndarray:
    """Normalized field estimate (x - denoise(x, r)) * target_scale(r)."""
    scale = space.target_scale(np.asarray(r, dtype=float))
    d = denoise(params, precond, x, r, space)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return (x - d) * float(scale)
    return (x - d) * np.broadcast_to(scale, (x.shape[0],))[:, None]


def loss_and_grad(params: dict, precond: Preconditioner, batch, space: SpaceConfig):
    """Preconditioned training loss and its full reverse-mode gradient.

    The stated per-element weight lambda(sigma) * c_out(sigma)^2 cancels
    analytically, leaving the unweighted square error of the raw network
    against (y - c_skip * x) / c_out, summed over the batch.
    """
    X = np.atleast_2d(np.asarray(batch.x, dtype=float))
    Y = np.atleast_2d(np.asarray(batch.clean, dtype=float))
    sigma = np.asarray(batch.sigma, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    cin, cout, cskip, cnoise = _coeffs(precond, sigma)
    u = np.concatenate([cin[:, None] * X, cnoise[:, None]], axis=1)
    f, cache = mlp_forward(params, u)
    raw_target = (Y - cskip[:, None] * X) / cout[:, None]
    resid = f - raw_target
    loss = float(np.sum(resid * resid))
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss!r}")
    grads = mlp_backward(params, cache, 2.0 * resid)
    return loss, grads


def raw_loss_and_grad(params: dict, inputs: np.ndarray, targets: np.ndarray):
    """Plain summed square error of the raw network on prebuilt inputs."""
    f, cache = mlp_forward(params, inputs)
    resid = f - np.atleast_2d(np.asarray(targets, dtype=float))
    loss = float(np.sum(resid * resid))
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss!r}")
    return loss, mlp_backward(params, cache, 2.0 * resid)


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter dict."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One bias-corrected Adam update; returns the new parameter dict."""
    if set(grads) != set(params):
        raise ValueError("gradient keys do not match parameters")
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    out = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {k}")
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        mhat = state.m[k] / bc1
        vhat = state.v[k] / bc2
        out[k] = p - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return out


def ema_update(ema_params: dict, params: dict, decay: float) -> dict:
    """Exponential moving average: decay * ema + (1 - decay) * params."""
    if not 0.0 <= decay < 1.0:
        raise ValueError(f"decay must be in [0, 1), got {decay!r}")
    return {k: decay * ema_params[k] + (1.0 - decay) * params[k] for k in params}


def save_checkpoint(path, params: dict, ema_params: dict, space: SpaceConfig,
                    precond: Preconditioner, widths=DEFAULT_WIDTHS) -> None:
    """Write parameters + EMA shadow + geometry to one npz container.

    Arrays are stored verbatim (float64), so load followed by save is
    bit-exact.
    """
    meta = {
        "n_data": space.n_data,
        "d_aug": "inf" if space.is_gaussian else space.d_aug,
        "sigma_data": precond.sigma_data,
        "widths": list(widths),
    }
    arrays = {f"param/{k}": v for k, v in params.items()}
    arrays.update({f"ema/{k}": v for k, v in ema_params.items()})
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Read a checkpoint; returns (params, ema_params, space, precond, widths)."""
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        params = {k.split("/", 1)[1]: z[k] for k in z.files if k.startswith("param/")}
        ema = {k.split("/", 1)[1]: z[k] for k in z.files if k.startswith("ema/")}
    d_aug = math.inf if meta["d_aug"] == "inf" else float(meta["d_aug"])
    space = SpaceConfig(meta["n_data"], d_aug)
    precond = Preconditioner(sigma_data=meta["sigma_data"])
    return params, ema, space, precond, tuple(meta["widths"])


class NetworkDenoiser:
    """Thin inference handle bundling parameters with their preconditioner."""

    def __init__(self, params: dict, precond: Preconditioner, space: SpaceConfig):
        self.params = params
        self.precond = precond
        self.space = space

    def denoise(self, x, r):
        return denoise(self.params, self.precond, x, r, self.space)

    @classmethod
    def from_checkpoint(cls, path, *, use_ema: bool = True) -> "NetworkDenoiser":
        params, ema, space, precond, _ = load_checkpoint(path)
        return cls(ema if use_ema else params, precond, space)
