"""CSV ingestion, the JSON result document and density-grid tables."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError, DimensionMismatch, EmptyData, ParseError

SCHEMA_VERSION = 1

_NUM = {"type": ["number", "null"]}
_VEC = {"type": "array", "items": _NUM}
_TEST = {
    "type": "object",
    "required": ["statistic", "variance", "p_value", "quantile", "accept_h0", "direction", "level_index"],
    "properties": {
        "statistic": _NUM,
        "variance": _NUM,
        "p_value": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "quantile": _NUM,
        "accept_h0": {"type": "boolean"},
        "direction": {"type": ["array", "null"], "items": _NUM},
        "level_index": {"type": "integer", "minimum": 0},
    },
}

RESULT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "status", "scenario", "data", "pursuit"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "status": {"enum": ["ok", "failed"]},
        "error": {"type": ["object", "null"]},
        "scenario": {"type": "object", "required": ["name"]},
        "data": {
            "type": "object",
            "required": ["m", "d"],
            "properties": {"m": {"type": "integer", "minimum": 1}, "d": {"type": "integer", "minimum": 1}},
        },
        "pursuit": {
            "type": ["object", "null"],
            "required": ["model", "stopped_at", "trace", "reports", "config"],
            "properties": {
                "model": {
                    "type": "object",
                    "required": ["base", "levels"],
                    "properties": {
                        "levels": {
                            "type": "array",
                            "items": {
                                "type": "object",
                                "required": ["direction", "numerator", "denominator", "divergence_estimate"],
                                "properties": {"direction": _VEC, "test": {"oneOf": [_TEST, {"type": "null"}]}},
                            },
                        }
                    },
                },
                "stopped_at": {"type": "integer", "minimum": 0},
                "trace": _VEC,
                "reports": {"type": "array", "items": _TEST},
                "config": {"type": "object"},
            },
        },
        "copula": {"type": ["object", "null"]},
        "regression": {"type": ["object", "null"]},
        "deconvolution": {"type": ["object", "null"]},
    },
}


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def ingest_csv(path, *, delimiter: str = ",", header: bool | None = None, columns=None) -> np.ndarray:
    """Read a numeric matrix from a delimited file.

    ``header=None`` treats the first row as a header when any of its cells
    is non-numeric. ``columns`` selects by index or header name. Row and
    column numbers in errors are 1-based file positions.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter)]
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise EmptyData(f"{path}: no rows")
    names = None
    if header is None:
        header = not all(_is_number(c) for c in rows[0][1])
    if header:
        names = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise EmptyData(f"{path}: header only, no data rows")
    width = len(rows[0][1])
    idx = _select(columns, names, width)
    out = np.empty((len(rows), len(idx)))
    for i, (line, r) in enumerate(rows):
        if len(r) != width:
            raise ParseError(line, None, f"expected {width} fields, found {len(r)}")
        for j, col in enumerate(idx):
            cell = r[col].strip()
            if cell == "":
                raise ParseError(line, col + 1, "missing value")
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(line, col + 1, f"non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise ParseError(line, col + 1, f"non-finite cell {cell!r}")
            out[i, j] = v
    return out


def _is_number(cell):
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _select(columns, names, width):
    if columns is None:
        return list(range(width))
    idx = []
    for c in columns:
        if isinstance(c, str) and not c.lstrip("-").isdigit():
            if names is None or c not in names:
                raise ConfigError("columns", f"unknown column {c!r}")
            idx.append(names.index(c))
        else:
            k = int(c)
            if not 0 <= k < width:
                raise ConfigError("columns", f"column index {k} out of range 0..{width - 1}")
            idx.append(k)
    return idx


def write_csv(path, matrix, *, header=None, delimiter: str = ","):
    """Write a matrix with shortest round-trip float formatting."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in matrix:
            w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# result document
# ---------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def result_bytes(doc: dict) -> bytes:
    """Canonical serialisation: sorted keys, fixed indentation, non-finite floats as null."""
    doc = _clean(doc)
    jsonschema.validate(doc, RESULT_SCHEMA)
    return (json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n").encode()


def write_result(path, doc: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(result_bytes(doc))
    return path


def read_result(path) -> dict:
    doc = json.loads(Path(path).read_text())
    jsonschema.validate(doc, RESULT_SCHEMA)
    return doc


# ---------------------------------------------------------------------------
# density grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Regular grid over one or two axes; other coordinates fixed at ``fixed``."""

    axes: tuple
    mins: tuple
    maxs: tuple
    counts: tuple
    fixed: tuple

    def __post_init__(self):
        k = len(self.axes)
        if not 1 <= k <= 2:
            raise ConfigError("grid.axes", "a density grid spans one or two axes")
        if not (len(self.mins) == len(self.maxs) == len(self.counts) == k):
            raise ConfigError("grid", "mins, maxs and counts need one entry per axis")
        if len(set(self.axes)) != k or any(not 0 <= a < len(self.fixed) for a in self.axes):
            raise ConfigError("grid.axes", "axes must be distinct coordinate indices")
        if any(c < 1 for c in self.counts):
            raise ConfigError("grid.counts", "counts must be positive")

    @property
    def d(self):
        return len(self.fixed)

    def points(self) -> np.ndarray:
        lines = [np.linspace(lo, hi, c) for lo, hi, c in zip(self.mins, self.maxs, self.counts)]
        mesh = np.meshgrid(*lines, indexing="ij")
        pts = np.tile(np.asarray(self.fixed, dtype=float), (mesh[0].size, 1))
        for ax, coords in zip(self.axes, mesh):
            pts[:, ax] = coords.ravel()
        return pts

    @classmethod
    def around(cls, data, axes=(0, 1), counts=41, pad=0.1):
        data = np.asarray(data, dtype=float)
        axes = tuple(a for a in axes if a < data.shape[1])
        lo, hi = data.min(axis=0), data.max(axis=0)
        span = hi - lo
        return cls(axes, tuple(float(lo[a] - pad * span[a]) for a in axes),
                   tuple(float(hi[a] + pad * span[a]) for a in axes),
                   (counts,) * len(axes), tuple(float(v) for v in data.mean(axis=0)))


def emit_density_grid(model, grid: GridSpec, path) -> Path:
    """Write ``x0,...,x{d-1},density`` rows for the grid points.

    ``model`` is a pursuit model (evaluated with ``eval_gk``) or any callable
    mapping an ``(N, d)`` array to ``N`` density values.
    """
    from .pursuit import PursuitModel, eval_gk

    pts = grid.points()
    if isinstance(model, PursuitModel):
        if model.d != grid.d:
            raise DimensionMismatch(f"grid has dimension {grid.d}, model has {model.d}")
        vals = eval_gk(model, pts)
    else:
        vals = np.broadcast_to(np.asarray(model(pts), dtype=float), (pts.shape[0],))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(path, np.column_stack([pts, vals]), header=[f"x{i}" for i in range(grid.d)] + ["density"])
    return path
