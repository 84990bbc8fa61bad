"""Deterministic CSV/JSON output and the run manifest."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np

__all__ = ["Curve", "emit_plot_data", "format_number", "write_json", "sha256_file"]


@dataclass
class Curve:
    """One CSV file: ordered column names, unit strings and equal-length data."""

    name: str
    columns: list
    data: dict
    units: dict | None = None


def format_number(v):
    """12 significant digits; refuses NaN and infinities."""
    v = float(v)
    if not math.isfinite(v):
        raise ValueError("refusing to serialize a non-finite number")
    s = f"{v:.12g}"
    return "0" if s == "-0" else s


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # undefined scalars (e.g. a width with no half-maximum crossing) become null
        return float(format_number(obj)) if math.isfinite(obj) else None
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def emit_plot_data(curves, out_dir):
    """Write each curve as ``<name>.csv``; returns {filename: sha256}.

    Values are checked before anything is written, so a NaN anywhere means
    no file at all.  An empty curve list writes nothing.
    """
    prepared = []
    for c in curves:
        cols = [np.asarray(c.data[k], dtype=float).ravel() for k in c.columns]
        n = {col.size for col in cols}
        if len(n) > 1:
            raise ValueError(f"curve {c.name}: columns have different lengths")
        for k, col in zip(c.columns, cols):
            if not np.all(np.isfinite(col)):
                raise ValueError(f"curve {c.name}: non-finite value in column {k}")
        prepared.append((c, cols))
    os.makedirs(out_dir, exist_ok=True)
    sums = {}
    for c, cols in prepared:
        fname = f"{c.name}.csv"
        path = os.path.join(out_dir, fname)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(c.columns) + "\n")
            for row in zip(*cols):
                fh.write(",".join(format_number(v) for v in row) + "\n")
        sums[fname] = sha256_file(path)
    return sums
