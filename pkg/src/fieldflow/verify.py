"""Fast self-verification battery for the verify run mode.

Each check is deterministic, runs in at most a few seconds, and reports one
(name, status, value, threshold) row.  The battery is a condensed version of
the test suite's invariants, runnable from a packaged install without pytest.
"""
from __future__ import annotations

import numpy as np

from . import net
from .field import continuity_residual, empirical_field, posterior_weights
from .kernel import RadiusLaw, radius_pdf, sample_radius
from .sampling import build_schedule, heun_solve, make_drift
from .space import AugmentedPoint, DataCloud, SpaceConfig
from .targets import minimizer_oracle
from .training import TrainConfig, train


def _check(rows, name, value, threshold, ok=None):
    status = bool(value <= threshold) if ok is None else bool(ok)
    rows.append({"check": name, "status": "pass" if status else "FAIL",
                 "value": float(value), "threshold": float(threshold)})
    return status


def run_verify_suite(cfg: dict):
    """Run every check; returns (report rows, all passed)."""
    seed = int(cfg.get("seed", 0))
    rows = []
    ok = True

    # radius law: quadrature normalization and Monte Carlo second moment
    from scipy import integrate

    law = RadiusLaw(SpaceConfig(2, 6), 1.0)
    mass = sum(integrate.quad(lambda R: radius_pdf(R, law), lo, hi, limit=200)[0]
               for lo, hi in ((0, 1), (1, 10), (10, 1000))) \
        + integrate.quad(lambda R: radius_pdf(R, law), 1000, np.inf, limit=200)[0]
    ok &= _check(rows, "radius-normalization", abs(mass - 1.0), 1e-6)

    draws = sample_radius(np.random.default_rng(seed), RadiusLaw(SpaceConfig(2, 8), 3.0),
                          size=500_000)
    ok &= _check(rows, "radius-second-moment",
                 abs((draws**2).mean() / (9 * 2 / 6) - 1.0), 0.02)

    # posterior and field identities on a fixed random cloud
    rng = np.random.default_rng(seed + 1)
    cloud = DataCloud(rng.standard_normal((12, 2)))
    space = SpaceConfig(2, 32)
    worst_sum = 0.0
    worst_cos = 0.0
    for _ in range(64):
        p = AugmentedPoint(rng.standard_normal(2), float(rng.uniform(0.05, 5.0)))
        w = posterior_weights(p, cloud, space)
        worst_sum = max(worst_sum, abs(w.sum() - 1.0))
        m = np.append(minimizer_oracle(p, cloud, space), space.sqrt_d)
        f = empirical_field(p, cloud, space)
        fv = np.append(f.e_x, f.e_r)
        cos = m @ fv / (np.linalg.norm(m) * np.linalg.norm(fv))
        worst_cos = max(worst_cos, abs(cos - 1.0))
    ok &= _check(rows, "posterior-sums-to-one", worst_sum, 1e-12)
    ok &= _check(rows, "minimizer-field-cosine", worst_cos, 1e-12)

    # transport identity at second order
    single = DataCloud(np.array([[0.0]]))
    sp1 = SpaceConfig(1, 1)
    maxima = [continuity_residual(np.arange(-2, 2 + h / 2, h), single, 1.0, h, sp1).max_abs
              for h in (2e-3, 1e-3)]
    ratio = maxima[0] / maxima[1]
    ok &= _check(rows, "continuity-h2-decay", abs(ratio - 4.0), 1.0)

    # schedule closed form and exactness of affine integration
    sched = build_schedule(80.0, 0.002, 7.0, 18)
    i = np.arange(18)
    closed = (80 ** (1 / 7) + i / 17 * (0.002 ** (1 / 7) - 80 ** (1 / 7))) ** 7
    node_err = np.max(np.abs(sched.nodes[:18] - closed) / closed)
    ok &= _check(rows, "schedule-closed-form", node_err, 1e-12)

    y = np.array([0.7, -0.3])
    sp = SpaceConfig(2, 64)
    schedule = build_schedule(sp.anchor_of(80.0), sp.anchor_of(0.002), 7.0, 6)
    from .kernel import sample_prior

    x0 = sample_prior(np.random.default_rng(seed + 2), schedule.r_max, sp)
    final = heun_solve(make_drift(DataCloud(y[None, :]), sp), schedule, x0).final
    ok &= _check(rows, "single-point-exactness", np.abs(final - y).max(), 1e-9)

    # gradient integrity on a width-4 network
    probe = DataCloud(np.random.default_rng(seed + 3).standard_normal((4, 2)))
    tcfg = TrainConfig(space=sp, batch=5, seed=seed)
    from .training import make_training_batch

    batch = make_training_batch(np.random.default_rng(seed + 4), probe, tcfg)
    params = net.init_params(np.random.default_rng(seed + 5), 2, widths=(4,))
    params["w1"] = 0.4 * np.random.default_rng(seed + 6).standard_normal(params["w1"].shape)
    precond = net.Preconditioner()
    _, grads = net.loss_and_grad(params, precond, batch, sp)
    h = 1e-5
    worst = 0.0
    for key, arr in params.items():
        flat = arr.ravel()
        gflat = grads[key].ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up, _ = net.loss_and_grad(params, precond, batch, sp)
            flat[idx] = orig - h
            dn, _ = net.loss_and_grad(params, precond, batch, sp)
            flat[idx] = orig
            num = (up - dn) / (2 * h)
            worst = max(worst, abs(num - gflat[idx]) / (abs(num) + 1e-8))
    ok &= _check(rows, "gradient-finite-difference", worst, 1e-5)

    # determinism: two tiny training runs are bit-identical
    small = TrainConfig(space=sp, batch=8, iterations=25, seed=seed, widths=(8,))
    r1 = train(probe, small)
    r2 = train(probe, small)
    identical = all(np.array_equal(r1.params[k], r2.params[k]) for k in r1.params)
    ok &= _check(rows, "training-determinism", 0.0 if identical else 1.0, 0.5, ok=identical)

    # preconditioner closed forms
    worst_pre = 0.0
    for sigma in (1e-3, 0.5, 80.0):
        worst_pre = max(worst_pre, abs(precond.c_in(sigma) ** 2 * (sigma**2 + 0.25) - 1))
        worst_pre = max(worst_pre, abs(precond.c_out(sigma) ** 2 - sigma**2 * precond.c_skip(sigma)))
    ok &= _check(rows, "preconditioner-identities", worst_pre, 1e-12)

    return rows, bool(ok)
