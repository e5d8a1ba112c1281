"""Deterministic CSV, solution dumps and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from pathlib import Path

import numpy as np

from .grid import ScalarField

__all__ = ["format_value", "write_csv", "write_solution", "read_solution", "sha256_of",
           "write_manifest", "versions"]

MANIFEST_VERSION = 1


def format_value(v):
    """Text form of one cell: shortest round-trip repr for floats."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path, rows, columns=None):
    """Write dict rows with a fixed column order and ``\\n`` line endings."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in columns])
    return Path(path)


def write_solution(path, u, binary=True):
    """CSV of ``x_1..x_N, value, interior`` for every node in C order.

    With ``binary`` a ``.npy`` mirror of the value array is written alongside.
    """
    grid = u.grid
    dim = grid.dimension
    coords = grid.coords.reshape(-1, dim)
    vals = u.values.ravel()
    inside = grid.interior_mask.ravel()
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{k + 1}" for k in range(dim)] + ["value", "interior"])
        for x, v, m in zip(coords, vals, inside):
            w.writerow([repr(float(c)) for c in x] + [repr(float(v)), int(m)])
    written = [path]
    if binary:
        npy = path.with_suffix(".npy")
        np.save(npy, np.ascontiguousarray(u.values))
        written.append(npy)
    return written


def read_solution(path, grid):
    """Load a solution written by ``write_solution`` (``.csv`` or ``.npy``).

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ValueError
        If the file does not match ``grid``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    if path.suffix == ".npy":
        values = np.load(path, allow_pickle=False)
        if values.shape != grid.shape:
            raise ValueError(f"solution shape {values.shape} does not match grid {grid.shape}")
        return ScalarField(grid, values)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    dim = grid.dimension
    if data.shape != (int(np.prod(grid.shape)), dim + 2):
        raise ValueError(f"solution file has shape {data.shape}, expected one row per grid node")
    if not np.allclose(data[:, :dim], grid.coords.reshape(-1, dim), rtol=0, atol=1e-12):
        raise ValueError("solution coordinates do not match the grid")
    return ScalarField(grid, data[:, dim].reshape(grid.shape))


def sha256_of(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions():
    import mpmath
    import pydantic
    import scipy
    import yaml

    from . import __version__

    return {
        "normpx": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.__version__,
        "pyyaml": yaml.__version__,
        "mpmath": mpmath.__version__,
    }


def write_manifest(out_dir, command, config, seed, timings, outputs, status="ok", extra=None):
    """Write ``manifest.json``: config echo, versions, seed, timings and CSV digests."""
    out_dir = Path(out_dir)
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "status": status,
        "seed": seed,
        "config": config,
        "versions": versions(),
        "timings": timings,
        "outputs": {Path(p).name: sha256_of(p) for p in outputs},
    }
    if extra:
        doc.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
