"""Deterministic JSON/CSV writers and the field CSV reader."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_field_csv(path, n):
    """Values from a ``point,value`` CSV; every point 0..n-1 exactly once."""
    vals = np.full(n, np.nan)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        try:
            p, v = int(row["point"]), float(row["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed field file {path}: {exc}") from exc
        if not 0 <= p < n:
            raise ValueError(f"field file {path} names point {p} outside 0..{n - 1}")
        vals[p] = v
    if np.isnan(vals).any():
        raise ValueError(f"field file {path} misses point {int(np.flatnonzero(np.isnan(vals))[0])}")
    return vals


def write_field_csv(path, values):
    write_csv(path, ["point", "value"], ((i, float(v)) for i, v in enumerate(values)))
