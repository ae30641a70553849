"""Seeded toy dataset generators and the shared reference clouds."""
from __future__ import annotations

import numpy as np

from .space import DataCloud

GENERATORS = ("gaussian-mixture", "two-moons", "spiral", "checkerboard", "single-point", "csv-file")


def gaussian_mixture(rng, count: int, *, modes: int = 8, radius: float = 2.0,
                     std: float = 0.1) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(modes) / modes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # stratified mode assignment: exact proportions keep downstream
    # mass-balance diagnostics free of multinomial noise
    which = rng.integers(0, modes, size=count)
    return centers[which] + std * rng.standard_normal((count, 2))


def two_moons(rng, count: int, *, noise: float = 0.05) -> np.ndarray:
    n_up = count // 2
    t_up = np.pi * rng.uniform(size=n_up)
    t_dn = np.pi * rng.uniform(size=count - n_up)
    up = np.stack([np.cos(t_up), np.sin(t_up)], axis=1)
    dn = np.stack([1.0 - np.cos(t_dn), 0.5 - np.sin(t_dn)], axis=1)
    pts = np.concatenate([up, dn])
    return pts + noise * rng.standard_normal(pts.shape)


def spiral(rng, count: int, *, turns: float = 1.5, scale: float = 2.0,
           noise: float = 0.05) -> np.ndarray:
    t = 2.0 * np.pi * turns * np.sqrt(rng.uniform(size=count))
    radii = scale * t / (2.0 * np.pi * turns)
    pts = np.stack([radii * np.cos(t), radii * np.sin(t)], axis=1)
    return pts + noise * rng.standard_normal(pts.shape)


def checkerboard(rng, count: int, *, cells: int = 4, extent: float = 2.0) -> np.ndarray:
    # rejection-free: pick one of the "dark" cells, then a uniform point in it
    side = 2.0 * extent / cells
    dark = [(i, j) for i in range(cells) for j in range(cells) if (i + j) % 2 == 0]
    which = rng.integers(0, len(dark), size=count)
    cell = np.array(dark, dtype=float)[which]
    u = rng.uniform(size=(count, 2))
    return -extent + side * (cell + u)


def single_point(point) -> np.ndarray:
    return np.asarray(point, dtype=float)[None, :]


def load_csv_points(path) -> np.ndarray:
    """Strict numeric CSV reader; reports the offending row and column."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if lineno == 1 and any(_not_number(c) for c in cells):
                continue  # header row
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ValueError(f"{path}: row {lineno} has {len(cells)} columns, expected {width}")
            parsed = []
            for col, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(f"{path}: row {lineno}, column {col}: not a number: {cell!r}") from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no numeric rows")
    return np.array(rows)


def _not_number(cell: str) -> bool:
    try:
        float(cell)
        return False
    except ValueError:
        return True


def make_dataset(spec: dict) -> DataCloud:
    """Build a cloud from a generator spec: name, count, seed, params."""
    if not isinstance(spec, dict):
        raise ValueError("dataset spec must be a mapping")
    name = spec.get("name")
    if name not in GENERATORS:
        raise ValueError(f"unknown dataset generator {name!r}; known: {', '.join(GENERATORS)}")
    params = dict(spec.get("params", {}))
    if name == "single-point":
        return DataCloud(single_point(params["point"]))
    if name == "csv-file":
        return DataCloud(load_csv_points(params["path"]))
    count = int(spec.get("count", 1024))
    seed = int(spec.get("seed", 0))
    rng = np.random.default_rng(seed)
    fn = {
        "gaussian-mixture": gaussian_mixture,
        "two-moons": two_moons,
        "spiral": spiral,
        "checkerboard": checkerboard,
    }[name]
    return DataCloud(fn(rng, count, **params))


STANDARD_MIXTURE_SPEC = {
    "name": "gaussian-mixture",
    "count": 1024,
    "seed": 7,
    "params": {"modes": 8, "radius": 2.0, "std": 0.1},
}


def standard_mixture_cloud() -> DataCloud:
    """The fixed 8-mode reference cloud used across diagnostics."""
    return make_dataset(STANDARD_MIXTURE_SPEC)


def standard_probe_cloud(n: int = 10) -> DataCloud:
    """Small fixed 2-d cloud for field/score comparisons."""
    spec = dict(STANDARD_MIXTURE_SPEC, count=n, seed=11)
    return make_dataset(spec)


def mixture_centers(modes: int = 8, radius: float = 2.0) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(modes) / modes
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
