"""Random line-integral forward operators.

Each measurement cell ``y`` owns a smooth path through the unit square. The
path is a quartic in ``t`` whose coefficients are smooth random functions of
``y`` (Perlin noise), rescaled per component to span ``[0, 1]``. The operator
row for ``y`` averages the input over the cells the path visits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import EmptyPath, InputError, OutOfDomain, ThetaOutOfRange

N_COEFFS = 5
# rows are assembled in chunks to bound memory on large grids
_CHUNK = 256

_GRADS = np.array(
    [[1, 1], [-1, 1], [1, -1], [-1, -1], [1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float
)


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


@dataclass(frozen=True)
class PerlinField:
    """Sum of gradient-noise octaves over the unit square.

    ``resolution`` is the number of lattice cells per side in the first
    octave; each further octave doubles it and halves the amplitude.
    """

    seed: int
    resolution: int = 4
    octaves: int = 4
    persistence: float = 0.5

    @cached_property
    def _perm(self) -> np.ndarray:
        p = np.random.default_rng(self.seed).permutation(256)
        return np.concatenate([p, p])

    def _noise(self, x, y):
        p = self._perm
        xi = np.floor(x).astype(np.int64)
        yi = np.floor(y).astype(np.int64)
        xf = x - xi
        yf = y - yi
        xi &= 255
        yi &= 255

        def corner(dx, dy):
            h = p[p[xi + dx] + yi + dy] & 7
            g = _GRADS[h]
            return g[..., 0] * (xf - dx) + g[..., 1] * (yf - dy)

        u = _fade(xf)
        v = _fade(yf)
        bottom = corner(0, 0) + u * (corner(1, 0) - corner(0, 0))
        top = corner(0, 1) + u * (corner(1, 1) - corner(0, 1))
        return bottom + v * (top - bottom)

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        total = np.zeros(y.shape[:-1])
        freq = float(self.resolution)
        amp = 1.0
        for _ in range(self.octaves):
            total += amp * self._noise(y[..., 0] * freq, y[..., 1] * freq)
            freq *= 2
            amp *= self.persistence
        return total


def perlin_eval(field: PerlinField, y) -> float | np.ndarray:
    """Evaluate ``field`` at one point (or an array of points) in the unit square."""
    arr = np.asarray(y, dtype=float)
    if arr.shape[-1] != 2:
        raise InputError("points must have two coordinates")
    if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
        raise OutOfDomain("points must lie in the unit square")
    out = field(arr)
    return float(out) if out.ndim == 0 else out


def _poly_range(c: np.ndarray) -> tuple[float, float]:
    """Min and max over [0, 1] of the polynomial with ascending coefficients ``c``."""
    cand = [0.0, 1.0]
    dc = np.polynomial.polynomial.polyder(c)
    if np.any(dc):
        roots = np.polynomial.polynomial.polyroots(np.trim_zeros(dc, "b"))
        cand += [r.real for r in roots if abs(r.imag) < 1e-12 and 0 < r.real < 1]
    vals = np.polynomial.polynomial.polyval(np.array(cand), c)
    return float(vals.min()), float(vals.max())


@dataclass(frozen=True, eq=False)
class PathSpec:
    """Quartic path ``sum_p alpha[p, r] t^p / p!`` rescaled into the unit square.

    ``alpha`` has shape ``(5, 2)``. A component that does not vary is pinned
    at 1/2.
    """

    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float).reshape(N_COEFFS, 2)
        a.flags.writeable = False
        object.__setattr__(self, "alpha", a)

    @cached_property
    def coeffs(self) -> np.ndarray:
        fact = np.array([math.factorial(p) for p in range(N_COEFFS)], dtype=float)
        return self.alpha / fact[:, None]

    @cached_property
    def bounds(self) -> np.ndarray:
        """Rows ``(lo, scale)`` per component; ``scale == 0`` marks a constant one."""
        out = np.zeros((2, 2))
        for r in range(2):
            c = self.coeffs[:, r]
            lo, hi = _poly_range(c)
            tiny = 1e-12 * max(1.0, float(np.max(np.abs(c))))
            out[:, r] = (lo, hi - lo) if hi - lo > tiny else (0.0, 0.0)
        return out

    def raw(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.stack(
            [np.polynomial.polynomial.polyval(t, self.coeffs[:, r]) for r in range(2)], axis=-1
        )

    def __call__(self, t) -> np.ndarray:
        x = self.raw(t)
        lo, scale = self.bounds
        out = np.full_like(x, 0.5)
        for r in range(2):
            if scale[r] > 0:
                out[..., r] = np.clip((x[..., r] - lo[r]) / scale[r], 0.0, 1.0)
        return out


def coefficient_fields(seed: int, resolution: int = 4) -> list[PerlinField]:
    """Ten independent noise fields, ordered as ``alpha[p, r]`` row-major."""
    children = np.random.SeedSequence(seed).spawn(2 * N_COEFFS)
    return [PerlinField(int(c.generate_state(1, np.uint64)[0]), resolution) for c in children]


def make_paths(seed: int, ny: int, resolution: int = 4) -> list[PathSpec]:
    """One path per measurement cell of an ``ny`` by ``ny`` grid, row-major."""
    if ny < 1:
        raise InputError("ny must be at least 1")
    c = (np.arange(ny) + 0.5) / ny
    Y = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
    alpha = np.stack([fld(Y) for fld in coefficient_fields(seed, resolution)], axis=-1)
    alpha = alpha.reshape(-1, N_COEFFS, 2)
    return [PathSpec(a) for a in alpha]


def _nearest(v: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Low and high nearest cell index along one axis; they differ only on ties."""
    s = v * n
    lo = np.clip(np.ceil(s) - 1, 0, n - 1).astype(np.int64)
    hi = np.clip(np.floor(s), 0, n - 1).astype(np.int64)
    return lo, hi


def sample_count(nx: int, ny: int) -> int:
    return 8 * max(nx, ny)


def assemble_lio(paths: list[PathSpec], nx: int, n_samples: int | None = None) -> sp.csr_matrix:
    """Rasterize paths onto an ``nx`` by ``nx`` input grid.

    Row ``q`` has value ``1/|I_q|`` on each cell of ``I_q``, the set of cells
    whose centre is nearest to some sampled point of path ``q``.
    """
    if nx < 1:
        raise InputError("nx must be at least 1")
    m = len(paths)
    if m == 0:
        raise EmptyPath("no paths given")
    ny = int(round(math.sqrt(m)))
    S = n_samples or sample_count(nx, ny)
    t = np.linspace(0.0, 1.0, S)
    keys = []
    for start in range(0, m, _CHUNK):
        chunk = paths[start:start + _CHUNK]
        pts = np.stack([p(t) for p in chunk])  # (P, S, 2)
        ilo, ihi = _nearest(pts[..., 0], nx)
        jlo, jhi = _nearest(pts[..., 1], nx)
        rows = np.arange(start, start + len(chunk), dtype=np.int64)[:, None]
        for i in (ilo, ihi):
            for j in (jlo, jhi):
                keys.append(np.unique((rows * nx * nx + i * nx + j).ravel()))
    keys = np.unique(np.concatenate(keys))
    rows, cols = np.divmod(keys, nx * nx)
    counts = np.bincount(rows, minlength=m)
    if np.any(counts == 0):
        raise EmptyPath("a path visited no cells")
    vals = 1.0 / counts[rows]
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, nx * nx))


def random_lio(seed: int, nx: int, ny: int) -> sp.csr_matrix:
    """Line-integral operator from an ``nx`` by ``nx`` grid to an ``ny`` by ``ny`` grid."""
    return assemble_lio(make_paths(seed, ny), nx)


@dataclass(frozen=True)
class OperatorFamily:
    """Operators ``L_theta`` interpolating fixed endpoints.

    With ``dim == 1`` the endpoints are ``(L0, L1)``. With ``dim == 2`` they are
    ``(L00, L10, L01, L11)``, blended bilinearly.
    """

    endpoints: tuple
    dim: int = 1

    def __post_init__(self):
        need = {1: 2, 2: 4}.get(self.dim)
        if need is None:
            raise InputError("dim must be 1 or 2")
        if len(self.endpoints) != need:
            raise InputError(f"dim {self.dim} needs {need} endpoints")
        shapes = {L.shape for L in self.endpoints}
        if len(shapes) != 1:
            raise InputError(f"endpoint shapes differ: {sorted(shapes)}")
        object.__setattr__(self, "endpoints", tuple(sp.csr_matrix(L) for L in self.endpoints))

    @property
    def shape(self) -> tuple[int, int]:
        return self.endpoints[0].shape

    def weights(self, theta) -> list[float]:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if th.size != self.dim:
            raise ThetaOutOfRange(f"expected {self.dim} parameters, got {th.size}")
        if np.any(th < 0) or np.any(th > 1) or not np.all(np.isfinite(th)):
            raise ThetaOutOfRange(f"theta {th.tolist()} outside [0, 1]")
        if self.dim == 1:
            return [1 - th[0], th[0]]
        t1, t2 = th
        return [(1 - t1) * (1 - t2), t1 * (1 - t2), (1 - t1) * t2, t1 * t2]


def family_at(fam: OperatorFamily, theta) -> sp.csr_matrix:
    out = None
    for c, L in zip(fam.weights(theta), fam.endpoints):
        if c == 0:
            continue
        term = L if c == 1 else c * L
        out = term if out is None else out + term
    if out is None:
        return sp.csr_matrix(fam.shape)
    return sp.csr_matrix(out)
