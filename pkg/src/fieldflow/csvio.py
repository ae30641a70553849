"""Schema-stable CSV writing with full-precision, round-trippable floats."""
from __future__ import annotations

import math
from pathlib import Path


def format_cell(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def write_rows(path, columns, rows) -> None:
    """Write a header plus rows of cells; every float keeps shortest-exact repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(columns)]
    for row in rows:
        if isinstance(row, dict):
            row = [row[c] for c in columns]
        if len(row) != len(columns):
            raise ValueError(f"row width {len(row)} != header width {len(columns)}")
        lines.append(",".join(format_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_matrix(path, matrix, prefix: str = "x") -> None:
    """Numeric matrix with generated coordinate headers (x0, x1, ...)."""
    cols = [f"{prefix}{j}" for j in range(matrix.shape[1])]
    write_rows(path, cols, [[float(v) for v in row] for row in matrix])


def write_trajectory(path, result) -> None:
    """Long-format trajectory: one row per (step, chain) with the anchor."""
    states = result.states
    if states.ndim == 2:  # single chain
        states = states[:, None, :]
    dim = states.shape[2]
    cols = ["step", "r", "chain"] + [f"x{j}" for j in range(dim)]
    rows = []
    for step in range(states.shape[0]):
        r = float(result.nodes[min(step, len(result.nodes) - 1)])
        for chain in range(states.shape[1]):
            rows.append([step, r, chain, *[float(v) for v in states[step, chain]]])
    write_rows(path, cols, rows)
