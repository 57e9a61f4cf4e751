"""Deterministic text persistence helpers shared by the module bundles.

Floats are written with 17 significant digits so every value round-trips
bit-exactly; files use '\n' newlines regardless of platform.
"""

from __future__ import annotations

import numpy as np

FLOAT_FMT = "%.17g"


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def write_matrix_csv(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="\n") as fh:
        for row in M:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    with open(path, "r") as fh:
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    return np.array(rows, dtype=float)


def write_kv(path, items: dict) -> None:
    """Write `key = value` lines in insertion order."""
    with open(path, "w", newline="\n") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {format_value(v)}\n")


def read_kv(path) -> dict:
    """Read `key = value` lines back as strings (callers convert types)."""
    out: dict[str, str] = {}
    with open(path, "r") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out
