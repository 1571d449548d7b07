"""Scalar and flux fields on uniform rectangular grids.

Cells are indexed by ``(i, j)`` with ``i`` along the first axis; flat data is
row-major, so cell ``(i, j)`` lives at ``i * ny + j``. Cell ``(i, j)`` has
centre ``((i + 1/2) dx, (j + 1/2) dy)``.

Flux components are stored on cell faces: ``mx[i, j]`` is the flux through
the face between cells ``(i-1, j)`` and ``(i, j)``, ``my[i, j]`` the flux
through the face between ``(i, j-1)`` and ``(i, j)``. The faces on the domain
boundary carry no flux, so ``mx[0, :]`` and ``my[:, 0]`` are always zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatch, InputError


def _frozen(values, n: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size != n:
        raise InputError(f"{name} has {arr.size} values, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


def _check_shape(nx, ny, dx, dy):
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InputError(f"grid size must be positive integers, got {nx}x{ny}")
    if not (dx > 0 and dy > 0 and np.isfinite(dx) and np.isfinite(dy)):
        raise InputError(f"cell widths must be positive, got dx={dx}, dy={dy}")


@dataclass(frozen=True, eq=False)
class GridFn:
    """Cell-averaged scalar field on an ``nx`` by ``ny`` grid."""

    nx: int
    ny: int
    dx: float
    dy: float
    data: np.ndarray

    def __post_init__(self):
        _check_shape(self.nx, self.ny, self.dx, self.dy)
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))
        object.__setattr__(self, "data", _frozen(self.data, self.nx * self.ny, "data"))

    @classmethod
    def from_array(cls, values, dx: float | None = None, dy: float | None = None) -> GridFn:
        """Wrap a 2-D array; spacings default to the unit square."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        nx, ny = values.shape
        return cls(nx, ny, 1.0 / nx if dx is None else dx, 1.0 / ny if dy is None else dy, values)

    @property
    def values(self) -> np.ndarray:
        """Read-only ``(nx, ny)`` view of the data."""
        return self.data.reshape(self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def shape(self) -> tuple[int, int]:
        return self.nx, self.ny

    def same_grid(self, other) -> bool:
        return (self.nx, self.ny, self.dx, self.dy) == (other.nx, other.ny, other.dx, other.dy)

    def with_data(self, values) -> GridFn:
        return GridFn(self.nx, self.ny, self.dx, self.dy, values)

    def mean(self) -> float:
        return float(np.mean(self.data))

    def __eq__(self, other):
        if not isinstance(other, GridFn):
            return NotImplemented
        return self.same_grid(other) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class FluxField:
    """Face fluxes with zero normal flux through the domain boundary."""

    nx: int
    ny: int
    dx: float
    dy: float
    mx: np.ndarray
    my: np.ndarray

    def __post_init__(self):
        _check_shape(self.nx, self.ny, self.dx, self.dy)
        n = int(self.nx) * int(self.ny)
        mx = _frozen(self.mx, n, "mx").reshape(self.nx, self.ny)
        my = _frozen(self.my, n, "my").reshape(self.nx, self.ny)
        if np.any(mx[0, :] != 0) or np.any(my[:, 0] != 0):
            raise InputError("flux through the domain boundary must be zero")
        object.__setattr__(self, "mx", mx.reshape(-1))
        object.__setattr__(self, "my", my.reshape(-1))

    @classmethod
    def zeros(cls, nx: int, ny: int, dx: float, dy: float) -> FluxField:
        return cls(nx, ny, dx, dy, np.zeros(nx * ny), np.zeros(nx * ny))

    @property
    def grid(self) -> GridFn:
        return GridFn(self.nx, self.ny, self.dx, self.dy, np.zeros(self.nx * self.ny))

    def magnitude_integral(self) -> float:
        """Sum of ``dx dy |m|`` over cells, pairing each cell with its low faces."""
        return float(self.dx * self.dy * np.sum(np.hypot(self.mx, self.my)))

    def __eq__(self, other):
        if not isinstance(other, FluxField):
            return NotImplemented
        return ((self.nx, self.ny, self.dx, self.dy) == (other.nx, other.ny, other.dx, other.dy)
                and np.array_equal(self.mx, other.mx) and np.array_equal(self.my, other.my))


@dataclass(frozen=True)
class MeanSplit:
    plus: GridFn
    minus: GridFn
    mu: float


def mean_split(f: GridFn) -> MeanSplit:
    """Split ``f - mean(f)`` into its positive and negative parts."""
    mu = f.mean()
    centred = f.data - mu
    return MeanSplit(f.with_data(np.maximum(centred, 0.0)), f.with_data(np.maximum(-centred, 0.0)), mu)


def divergence(m: FluxField) -> GridFn:
    """Net outflow per unit area of every cell."""
    mx = m.mx.reshape(m.nx, m.ny)
    my = m.my.reshape(m.nx, m.ny)
    div = np.zeros((m.nx, m.ny))
    div[:-1, :] += mx[1:, :] / m.dx
    div -= mx / m.dx
    div[:, :-1] += my[:, 1:] / m.dy
    div -= my / m.dy
    return GridFn(m.nx, m.ny, m.dx, m.dy, div)


def discrete_gradient_matrix(nx: int, ny: int, dx: float, dy: float) -> sp.csr_matrix:
    """Backward-difference gradient, shape ``(2 nx ny, nx ny)``.

    Row ``2k`` holds the first-axis difference at cell ``k`` and row ``2k+1``
    the second-axis difference. Cells on the low edge of an axis get a zero
    row for that axis.
    """
    _check_shape(nx, ny, dx, dy)
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []
    xk = idx[1:, :].ravel()
    rows += [2 * xk, 2 * xk]
    cols += [xk, idx[:-1, :].ravel()]
    vals += [np.full(xk.size, 1.0 / dx), np.full(xk.size, -1.0 / dx)]
    yk = idx[:, 1:].ravel()
    rows += [2 * yk + 1, 2 * yk + 1]
    cols += [yk, idx[:, :-1].ravel()]
    vals += [np.full(yk.size, 1.0 / dy), np.full(yk.size, -1.0 / dy)]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * nx * ny, nx * ny),
    )


def gradient(u: GridFn) -> FluxField:
    """Apply the backward-difference gradient, returned as face values."""
    g = discrete_gradient_matrix(u.nx, u.ny, u.dx, u.dy) @ u.data
    return FluxField(u.nx, u.ny, u.dx, u.dy, g[0::2], g[1::2])


def inner(a: GridFn, b: GridFn) -> float:
    if not a.same_grid(b):
        raise GridMismatch("fields live on different grids")
    return float(a.cell_area * np.dot(a.data, b.data))


def flux_inner(a: FluxField, b: FluxField) -> float:
    return float(a.dx * a.dy * (np.dot(a.mx, b.mx) + np.dot(a.my, b.my)))


def norm_l1(z: GridFn) -> float:
    return float(z.cell_area * np.sum(np.abs(z.data)))


def norm_l2(z: GridFn) -> float:
    return float(np.sqrt(z.cell_area * np.dot(z.data, z.data)))
