"""Plain-text writers and readers for run artifacts.

All numbers are written with 17 significant digits, so ``float(text)``
recovers the stored double exactly, and every file uses LF line endings.
Nothing here depends on locale or wall-clock time; identical inputs produce
identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import MissingArtifact

SNAPSHOT_HEADER_3D = ("k", "u", "x1", "x2", "x3")
SNAPSHOT_HEADER_2D = ("k", "u", "y1", "y2")
SERIES_COLUMNS = ("t", "dt", "L", "max_f_abs", "phi_l2", "mean_kv", "dispersion",
                  "max_speed", "decay_rate", "alpha_residual")
IMMERSED_COLUMNS = ("metric_det_min", "metric_det_max")


def fmt(x: float) -> str:
    """Shortest-safe text for a double: 17 significant digits, round-trip exact."""
    return format(float(x), ".17g")


def _write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_snapshot(path, nodes: np.ndarray) -> Path:
    """CSV with one row per node; the header depends on the node dimension."""
    nodes = np.asarray(nodes, dtype=float)
    M, dim = nodes.shape
    header = SNAPSHOT_HEADER_3D if dim == 3 else SNAPSHOT_HEADER_2D
    lines = [",".join(header)]
    for k in range(M):
        lines.append(",".join([str(k), fmt(k / M)] + [fmt(v) for v in nodes[k]]))
    return _write_text(path, "\n".join(lines) + "\n")


def read_snapshot(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(u, nodes)`` from a snapshot CSV."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"snapshot not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = tuple(rows[0])
    if header not in (SNAPSHOT_HEADER_3D, SNAPSHOT_HEADER_2D):
        raise ValueError(f"{path}: unexpected snapshot header {header}")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return data[:, 1], data[:, 2:]


def write_series(path, rows: Sequence[dict], columns: Sequence[str]) -> Path:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(row[c]) for c in columns))
    return _write_text(path, "\n".join(lines) + "\n")


def read_series(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"series file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MissingArtifact(f"series file is empty: {path}")
    cols = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(cols))
    return {c: data[:, i] for i, c in enumerate(cols)}


def write_polyline_obj(path, X: np.ndarray) -> Path:
    """Closed polyline as Wavefront OBJ (``v`` records and one ``l`` record)."""
    X = np.asarray(X, dtype=float)
    lines = [f"v {fmt(p[0])} {fmt(p[1])} {fmt(p[2])}" for p in X]
    lines.append("l " + " ".join(str(i + 1) for i in range(len(X))) + " 1")
    return _write_text(path, "\n".join(lines) + "\n")


def write_surface_obj(path, verts: np.ndarray, faces: np.ndarray) -> Path:
    lines = [f"v {fmt(p[0])} {fmt(p[1])} {fmt(p[2])}" for p in np.asarray(verts, float)]
    lines += ["f " + " ".join(str(int(i) + 1) for i in face) for face in np.asarray(faces)]
    return _write_text(path, "\n".join(lines) + "\n")


def write_columns(path, columns: dict[str, Iterable[float]], comment: str = "") -> Path:
    """Whitespace-separated plot data with a ``#`` header line."""
    names = list(columns)
    arrays = [np.asarray(list(columns[n]), dtype=float) for n in names]
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("# " + " ".join(names))
    for vals in zip(*arrays):
        lines.append(" ".join(fmt(v) for v in vals))
    return _write_text(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> Path:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    return _write_text(path, text + "\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"metadata not found: {path}")
    with open(path) as fh:
        return json.load(fh)
