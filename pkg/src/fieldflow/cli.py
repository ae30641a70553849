"""Command-line experiment runner: seeded, manifest-stamped, rerunnable.

One process handles one run.  A JSON config (strictly validated, unknown keys
rejected) picks a mode; flags override file values.  Every run writes a
manifest echoing the resolved config plus library versions, so re-running the
manifest's config reproduces every CSV byte for byte.  Report-producing modes
render figures next to their delimited outputs.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, csvio, datasets, net, reports
from .analysis import (
    convergence_curve,
    nfe_sweep,
    posterior_ratio_check,
    radius_variance_curve,
    robustness_sweep,
    tvd_phase,
)
from .space import SpaceConfig
from .sampling import build_schedule, heun_solve, make_drift
from .training import TrainConfig, train
from .verify import run_verify_suite

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

MODES = ("verify", "train", "sample", "analyze", "robustness")


class ValidationError(ValueError):
    pass


def _require_keys(section: dict, allowed: dict, where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    out = {}
    for key, (default, caster) in allowed.items():
        if key in section:
            try:
                out[key] = caster(section[key])
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{where}.{key}: {exc}") from None
        else:
            out[key] = default
    return out


def _as_d_aug(value) -> float:
    if value in ("inf", "gaussian"):
        return math.inf
    d = float(value)
    if not d > 0:
        raise ValueError(f"d_aug must be positive, got {value!r}")
    return d


def _float_list(value):
    return [float(v) for v in value]


def _int_list(value):
    return [int(v) for v in value]


DEFAULT_SPACE = {"n_data": (2, int), "d_aug": (128.0, _as_d_aug)}
DEFAULT_DATASET = datasets.STANDARD_MIXTURE_SPEC
DEFAULT_TRAIN = {
    "batch": (256, int),
    "iterations": (20_000, int),
    "lr": (1e-3, float),
    "ema_decay": (0.999, float),
    "p_mean": (-1.2, float),
    "p_std": (1.2, float),
    "sigma_data": (0.5, float),
    "widths": ((128, 128, 128), lambda v: tuple(int(x) for x in v)),
}
DEFAULT_SAMPLER = {
    "steps": (18, int),
    "rho": (7.0, float),
    "sigma_max": (80.0, float),
    "sigma_min": (0.002, float),
    "alpha": (0.0, float),
    "backend": ("oracle", str),
    "checkpoint": (None, str),
    "count": (2048, int),
    "use_ema": (True, bool),
    "save_trajectory": (False, bool),
}
DEFAULT_ANALYZE = {
    "sigma": (0.5, float),
    "d_list": ([16, 256, 4096, 65536, 1048576], _float_list),
    "tvd_d_list": ([64.0, 2048.0, math.inf], lambda v: [_as_d_aug(x) for x in v]),
    "variance_d_list": ([8, 64, 512, 4096], _float_list),
    "n_probes": (512, int),
    "ratio_separation": (1.0, float),
    "ratio_n_data": (64, int),
    "ratio_d_aug": (1024.0, float),
    "ratio_trials": (20_000, int),
}
DEFAULT_ROBUSTNESS = {
    "alphas": ([0.0, 0.1, 0.2], _float_list),
    "t_list": ([], _int_list),
    "d_list": ([64.0, math.inf], lambda v: [_as_d_aug(x) for x in v]),
    "count": (1024, int),
    "n_proj": (64, int),
    "steps": (18, int),
    "sigma_max": (80.0, float),
    "sigma_min": (0.002, float),
    "reference_count": (4096, int),
}


def resolve_config(raw: dict) -> dict:
    """Validate and fill defaults; raises ValidationError on unknown keys."""
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    top_allowed = {"mode", "seed", "out", "space", "dataset", "train", "sampler",
                   "analyze", "robustness"}
    unknown = set(raw) - top_allowed
    if unknown:
        raise ValidationError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    mode = raw.get("mode")
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {', '.join(MODES)}; got {mode!r}")

    dataset = raw.get("dataset", dict(DEFAULT_DATASET))
    if not isinstance(dataset, dict):
        raise ValidationError("dataset must be an object")
    ds_unknown = set(dataset) - {"name", "count", "seed", "params"}
    if ds_unknown:
        raise ValidationError(f"unknown key(s) in dataset: {', '.join(sorted(ds_unknown))}")

    cfg = {
        "mode": mode,
        "seed": int(raw.get("seed", 0)),
        "out": str(raw.get("out", "runs/out")),
        "space": _require_keys(raw.get("space", {}), DEFAULT_SPACE, "space"),
        "dataset": dataset,
        "train": _require_keys(raw.get("train", {}), DEFAULT_TRAIN, "train"),
        "sampler": _require_keys(raw.get("sampler", {}), DEFAULT_SAMPLER, "sampler"),
        "analyze": _require_keys(raw.get("analyze", {}), DEFAULT_ANALYZE, "analyze"),
        "robustness": _require_keys(raw.get("robustness", {}), DEFAULT_ROBUSTNESS, "robustness"),
    }
    return cfg


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def write_manifest(out: Path, cfg: dict, artifacts: list) -> None:
    import matplotlib
    import scipy

    manifest = {
        "config": _jsonable(cfg),
        "versions": {
            "fieldflow": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
        },
        "artifacts": sorted(artifacts),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")


def _space_from(cfg: dict) -> SpaceConfig:
    return SpaceConfig(cfg["space"]["n_data"], cfg["space"]["d_aug"])


def _train_config(cfg: dict, space: SpaceConfig) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        space=space,
        p_mean=t["p_mean"],
        p_std=t["p_std"],
        batch=t["batch"],
        iterations=t["iterations"],
        seed=cfg["seed"],
        lr=t["lr"],
        ema_decay=t["ema_decay"],
        widths=t["widths"],
        sigma_data=t["sigma_data"],
    )


def run_train(cfg: dict, out: Path) -> list:
    space = _space_from(cfg)
    cloud = datasets.make_dataset(cfg["dataset"])
    result = train(cloud, _train_config(cfg, space))
    ckpt = out / "checkpoint.npz"
    net.save_checkpoint(ckpt, result.params, result.ema_params, space,
                        result.precond, cfg["train"]["widths"])
    csvio.write_rows(out / "loss_trace.csv", ["iter", "loss", "sigma_mean"], result.trace)
    reports.loss_curve(result.trace, out / "loss_trace.png")
    return ["checkpoint.npz", "loss_trace.csv", "loss_trace.png"]


def run_sample(cfg: dict, out: Path) -> list:
    space = _space_from(cfg)
    s = cfg["sampler"]
    if s["backend"] == "oracle":
        backend = datasets.make_dataset(cfg["dataset"])
        cloud_for_plot = backend
    elif s["backend"] == "checkpoint":
        path = s["checkpoint"]
        if not path or not Path(path).exists():
            raise ValidationError(f"checkpoint not found: {path!r}")
        backend = net.NetworkDenoiser.from_checkpoint(path, use_ema=s["use_ema"])
        space = backend.space
        cloud_for_plot = None
    else:
        raise ValidationError(f"sampler.backend must be 'oracle' or 'checkpoint', got {s['backend']!r}")
    schedule = build_schedule(space.anchor_of(s["sigma_max"]), space.anchor_of(s["sigma_min"]),
                              s["rho"], s["steps"])
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 2]))
    from .kernel import sample_prior

    x0 = sample_prior(rng, schedule.r_max, space, count=s["count"])
    result = heun_solve(make_drift(backend, space), schedule, x0,
                        rng=rng, alpha=s["alpha"], space=space)
    csvio.write_matrix(out / "samples.csv", result.final)
    reports.scatter_samples(result.final, out / "samples.png", cloud=cloud_for_plot)
    artifacts = ["samples.csv", "samples.png"]
    if s["save_trajectory"]:
        csvio.write_trajectory(out / "trajectory.csv", result)
        artifacts.append("trajectory.csv")
    return artifacts


def run_analyze(cfg: dict, out: Path) -> list:
    space = _space_from(cfg)
    a = cfg["analyze"]
    cloud = datasets.make_dataset(cfg["dataset"])
    seed = cfg["seed"]
    artifacts = []

    curve = convergence_curve(cloud, a["sigma"], a["d_list"], a["n_probes"],
                              np.random.default_rng(np.random.SeedSequence([seed, 3])))
    csvio.write_rows(out / "field_score_gap.csv", ["d_aug", "mean_l2_gap"], curve)
    reports.curve_plot(curve, out / "field_score_gap.png", xlabel="d_aug",
                       ylabel="mean L2 gap", title="field vs score")
    artifacts += ["field_score_gap.csv", "field_score_gap.png"]

    var_rows = radius_variance_curve(space.n_data, lambda d: a["sigma"] * math.sqrt(d),
                                     a["variance_d_list"],
                                     np.random.default_rng(np.random.SeedSequence([seed, 4])),
                                     n_samples=500_000, include_limit=True)
    csvio.write_rows(out / "radius_variance.csv", ["d_aug", "variance"],
                     [(d, v) for d, v in var_rows])
    reports.curve_plot(var_rows, out / "radius_variance.png", xlabel="d_aug",
                       ylabel="Var[R]", title="radius concentration")
    artifacts += ["radius_variance.csv", "radius_variance.png"]

    tvd_rows = []
    for d_aug in a["tvd_d_list"]:
        sp = SpaceConfig(space.n_data, d_aug)
        v = tvd_phase(cloud, sp.anchor_of(a["sigma"]), a["n_probes"],
                      np.random.default_rng(np.random.SeedSequence([seed, 5])), sp)
        tvd_rows.append((d_aug, v))
    csvio.write_rows(out / "tvd_phase.csv", ["d_aug", "mean_tvd"], tvd_rows)
    reports.curve_plot(tvd_rows, out / "tvd_phase.png", xlabel="d_aug",
                       ylabel="mean TVD", logy=False, title="posterior phase")
    artifacts += ["tvd_phase.csv", "tvd_phase.png"]

    emp, pred = posterior_ratio_check(
        a["ratio_separation"], a["sigma"] * math.sqrt(a["ratio_d_aug"]),
        a["ratio_n_data"], a["ratio_d_aug"],
        np.random.default_rng(np.random.SeedSequence([seed, 6])), a["ratio_trials"])
    csvio.write_rows(out / "posterior_ratio.csv", ["empirical", "predicted"], [(emp, pred)])
    artifacts.append("posterior_ratio.csv")
    return artifacts


def run_robustness(cfg: dict, out: Path) -> list:
    space = _space_from(cfg)
    r = cfg["robustness"]
    cloud = datasets.make_dataset(cfg["dataset"])
    ref_spec = dict(cfg["dataset"])
    ref_spec["count"] = r["reference_count"]
    ref_spec["seed"] = int(ref_spec.get("seed", 0)) + 101
    reference = datasets.make_dataset(ref_spec).points

    models = []
    for d_aug in r["d_list"]:
        label = "gauss-limit" if math.isinf(d_aug) else f"d{d_aug:g}"
        models.append((label, cloud, SpaceConfig(space.n_data, d_aug)))

    artifacts = []
    rows = robustness_sweep(models, r["alphas"], r["sigma_max"], r["sigma_min"],
                            cfg["seed"], reference, steps=r["steps"], count=r["count"],
                            n_proj=r["n_proj"])
    cols = ["label", "d_aug", "alpha", "steps", "sw"]
    csvio.write_rows(out / "robustness.csv", cols, rows)
    reports.sweep_plot(rows, out / "robustness.png", x_key="alpha", title="noise injection")
    artifacts += ["robustness.csv", "robustness.png"]

    if r["t_list"]:
        nfe_rows = nfe_sweep(models, r["t_list"], r["sigma_max"], r["sigma_min"],
                             cfg["seed"], reference, count=r["count"], n_proj=r["n_proj"])
        csvio.write_rows(out / "nfe.csv", cols, nfe_rows)
        reports.sweep_plot(nfe_rows, out / "nfe.png", x_key="steps", title="step-count stress")
        artifacts += ["nfe.csv", "nfe.png"]
    return artifacts


def _write_error(out: Path, kind: str, message: str) -> None:
    record = {"error": {"type": kind, "message": message}}
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    except OSError:
        pass
    print(json.dumps(record), file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fieldflow",
                                     description="seeded experiment runner")
    parser.add_argument("--config", type=str, default=None, help="JSON config path")
    parser.add_argument("--mode", type=str, default=None, choices=MODES)
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    args = parser.parse_args(argv)

    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            _write_error(Path(args.out or "."), "validation", f"config not found: {args.config}")
            return EXIT_VALIDATION
        except json.JSONDecodeError as exc:
            _write_error(Path(args.out or "."), "validation", f"bad JSON: {exc}")
            return EXIT_VALIDATION
    # flags override file values
    if args.mode is not None:
        raw["mode"] = args.mode
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out

    try:
        cfg = resolve_config(raw)
    except ValidationError as exc:
        _write_error(Path(raw.get("out", ".")), "validation", str(exc))
        return EXIT_VALIDATION

    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        if cfg["mode"] == "verify":
            report_rows, ok = run_verify_suite(cfg)
            csvio.write_rows(out / "verify_report.csv",
                             ["check", "status", "value", "threshold"], report_rows)
            artifacts = ["verify_report.csv"]
            write_manifest(out, cfg, artifacts)
            if not ok:
                _write_error(out, "runtime", "verification checks failed")
                return EXIT_RUNTIME
        elif cfg["mode"] == "train":
            artifacts = run_train(cfg, out)
            write_manifest(out, cfg, artifacts)
        elif cfg["mode"] == "sample":
            artifacts = run_sample(cfg, out)
            write_manifest(out, cfg, artifacts)
        elif cfg["mode"] == "analyze":
            artifacts = run_analyze(cfg, out)
            write_manifest(out, cfg, artifacts)
        elif cfg["mode"] == "robustness":
            artifacts = run_robustness(cfg, out)
            write_manifest(out, cfg, artifacts)
    except ValidationError as exc:
        _write_error(out, "validation", str(exc))
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        _write_error(out, "runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    return EXIT_OK


def console_main() -> None:
    raise SystemExit(main())
