"""Text dump format for grid fields.

Header ``ellipfield v1 n N kind`` followed by one line per cell in row-major
order.  ``kind`` is one of scalar, complex, vector, cvector, coeff, ccoeff.
Vector lines hold n values, coefficient lines hold n*n values (row-major
matrix); complex kinds interleave real and imaginary parts.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import CoefficientField, PeriodicGrid

MAGIC = "ellipfield"
VERSION = "v1"
KINDS = ("scalar", "complex", "vector", "cvector", "coeff", "ccoeff")


def _kind_for(arr: np.ndarray, grid: PeriodicGrid, coeff: bool) -> str:
    cplx = np.iscomplexobj(arr) and not np.allclose(np.imag(arr), 0)
    if coeff:
        return "ccoeff" if cplx else "coeff"
    if arr.shape == grid.shape:
        return "complex" if cplx else "scalar"
    if arr.shape == (grid.n,) + grid.shape:
        return "cvector" if cplx else "vector"
    raise ValueError(f"array of shape {arr.shape} does not fit grid {grid.shape}")


def dump_field(path, arr: np.ndarray, grid: PeriodicGrid, coeff: bool = False) -> str:
    arr = np.asarray(arr)
    kind = _kind_for(arr, grid, coeff)
    if kind in ("vector", "cvector"):
        rows = np.moveaxis(arr, 0, -1).reshape(grid.size, grid.n)
    elif kind in ("coeff", "ccoeff"):
        rows = arr.reshape(grid.size, grid.n * grid.n)
    else:
        rows = arr.reshape(grid.size, 1)
    if kind in ("complex", "cvector", "ccoeff"):
        inter = np.empty((rows.shape[0], 2 * rows.shape[1]))
        inter[:, 0::2] = rows.real
        inter[:, 1::2] = rows.imag
        rows = inter
    else:
        rows = np.real(rows)
    lines = [f"{MAGIC} {VERSION} {grid.n} {grid.N} {kind}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")
    return kind


def load_field(path) -> tuple[np.ndarray, PeriodicGrid, str]:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != MAGIC or header[1] != VERSION:
            raise ValueError(f"{path}: not an {MAGIC} {VERSION} file")
        n, N, kind = int(header[2]), int(header[3]), header[4]
        if kind not in KINDS:
            raise ValueError(f"{path}: unknown kind {kind!r}")
        data = np.loadtxt(fh, ndmin=2)
    grid = PeriodicGrid(n, N)
    if data.shape[0] != grid.size:
        raise ValueError(f"{path}: expected {grid.size} rows, found {data.shape[0]}")
    if kind in ("complex", "cvector", "ccoeff"):
        data = data[:, 0::2] + 1j * data[:, 1::2]
    if kind in ("scalar", "complex"):
        arr = data[:, 0].reshape(grid.shape)
    elif kind in ("vector", "cvector"):
        arr = np.moveaxis(data.reshape(grid.shape + (n,)), -1, 0)
    else:
        arr = data.reshape(grid.shape + (n, n))
    return arr, grid, kind


def load_coefficients(path) -> tuple[CoefficientField, PeriodicGrid]:
    arr, grid, kind = load_field(path)
    if kind not in ("coeff", "ccoeff"):
        raise ValueError(f"{path}: expected a coefficient field, found {kind}")
    return CoefficientField(arr), grid
