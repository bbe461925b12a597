"""Deterministic JSON/CSV emission with 17 significant digits.

The standard ``json`` module prints floats with ``repr``; here every float is
written with ``%.17g`` so files are byte-identical across runs and round-trip
exactly.  Non-finite floats become ``null``.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .grid import Grid, GridSpec, build_grid
from .state import SpinorState


def fmt(x: float) -> str:
    return "%.17g" % x


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(float(obj)) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def config_hash(config: dict) -> str:
    """Short SHA-256 of the canonical (sorted, 17-digit) config encoding."""
    canon = dumps(dict(sorted(config.items())), indent=0)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def grid_comment(grid: Grid) -> str:
    shape = "x".join(str(k) for k in grid.shape)
    return f"# grid dim={grid.dim} n={grid.n} extent={fmt(grid.extent)} shape={shape}"


def write_csv(path: Path, header: list[str], rows, comment: str | None = None) -> Path:
    lines = [] if comment is None else [comment]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(float(v)) for v in row))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_state(path: Path, s: SpinorState) -> list[Path]:
    """1-D: columns x,u1,u0,um1.  Higher dimensions: row-major flattened
    u1,u0,um1 columns plus a JSON sidecar giving the shape."""
    g = s.grid
    path = Path(path)
    if g.dim == 1:
        return [write_csv(path, ["x", "u1", "u0", "um1"], zip(g.axis, s.u1, s.u0, s.um1), grid_comment(g))]
    cols = [u.ravel(order="C") for u in s.components]
    out = [write_csv(path, ["u1", "u0", "um1"], zip(*cols), grid_comment(g))]
    side = {"dim": g.dim, "n": g.n, "extent": g.extent, "shape": list(g.shape), "order": "C",
            "columns": ["u1", "u0", "um1"]}
    out.append(write_json(path.with_suffix(".json"), side))
    return out


def _parse_comment(line: str) -> GridSpec:
    fields = dict(tok.split("=", 1) for tok in line.lstrip("#").split() if "=" in tok)
    return GridSpec(int(fields["dim"]), float(fields["extent"]), int(fields["n"]))


def read_state(path: Path, grid: Grid | None = None) -> SpinorState:
    """Inverse of ``write_state``.  The grid comes from the header comment
    unless one is given, in which case the two must agree."""
    path = Path(path)
    text = path.read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing grid header comment")
    spec = _parse_comment(text[0])
    if grid is None:
        grid = build_grid(spec)
    elif grid.spec != spec:
        raise ValueError(f"{path}: state grid {spec} does not match {grid.spec}")
    header = text[1].split(",")
    data = np.loadtxt(text[2:], delimiter=",", ndmin=2)
    if data.shape[0] != int(np.prod(grid.shape)):
        raise ValueError(f"{path}: {data.shape[0]} rows for a grid of {grid.shape}")
    idx = [header.index(k) for k in ("u1", "u0", "um1")]
    comps = [data[:, i].reshape(grid.shape) for i in idx]
    return SpinorState(grid, *comps)
