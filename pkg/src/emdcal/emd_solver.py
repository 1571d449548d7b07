"""Earth mover's distance on uniform grids and the structure semi-norm.

The distance is computed as a minimum-cost flow on a lattice graph. Every
cell is linked to the cells reached by the primitive integer steps
``(a, b)`` with ``max(|a|, |b|) <= stencil``, and each link costs its
Euclidean length. With the default stencil of 2 the flow cost is within
about 1% of the exact transport cost between cell centres, while the
5-point stencil would measure Manhattan distance.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _pdhg
from .errors import GridMismatch, InputError, MassMismatch, NegativeDensity, TooLarge
from .grid_core import FluxField, GridFn, mean_split

MASS_TOL = 1e-9
EXACT_MAX_CELLS = 64
# coarse levels are only used while both sides stay at least this long
_MIN_COARSE = 16


@dataclass(frozen=True)
class EmdConfig:
    """Solver settings.

    ``mu_step`` and ``tau_step`` set the initial ratio between the primal and
    dual step sizes. Their product is rescaled to the stability limit of the
    iteration, and the ratio is adapted at restarts.
    """

    max_iter: int = 8000
    mu_step: float = 7e-6
    tau_step: float = 3.0
    tol: float = 1e-6
    ground_metric: str = "euclidean"
    stencil: int = 2
    multilevel: bool = True
    check_every: int = 50

    def __post_init__(self):
        if self.max_iter < 1 or self.check_every < 1:
            raise InputError("max_iter and check_every must be positive")
        if not (self.mu_step > 0 and self.tau_step > 0 and self.tol > 0):
            raise InputError("mu_step, tau_step and tol must be positive")
        if self.ground_metric != "euclidean":
            raise InputError(f"unsupported ground metric {self.ground_metric!r}")
        if self.stencil < 1:
            raise InputError("stencil must be at least 1")


@dataclass(frozen=True, eq=False)
class EmdResult:
    value: float
    flux: FluxField
    iterations: int
    converged: bool
    residual: float = 0.0
    directions: tuple = ()
    edge_flow: np.ndarray = field(default=None, repr=False)

    def edge_cost(self) -> float:
        """Cost of ``edge_flow``, which equals ``value`` by construction."""
        if self.edge_flow is None or not self.directions:
            return 0.0
        g = self.flux
        w = np.array([math.hypot(a * g.dx, b * g.dy) for a, b in self.directions])
        return float(np.sum(w[:, None] * np.abs(self.edge_flow.reshape(len(w), -1))))


@functools.lru_cache(maxsize=None)
def stencil_directions(radius: int) -> tuple:
    """Primitive steps ``(a, b)`` with ``a > 0``, or ``a == 0 < b``."""
    out = []
    for a in range(0, radius + 1):
        for b in range(-radius, radius + 1):
            if (a == 0 and b <= 0) or math.gcd(a, b) != 1:
                continue
            out.append((a, b))
    return tuple(out)


def _directions(nx, ny, radius):
    return tuple((a, b) for a, b in stencil_directions(radius) if a < nx and abs(b) < ny)


@functools.lru_cache(maxsize=None)
def _norm_bound(dirs: tuple) -> float:
    # sup of the lattice Laplacian symbol bounds ||B||^2 on any finite window
    xi = np.linspace(0.0, 2 * np.pi, 257)[:-1]
    X, Y = np.meshgrid(xi, xi, indexing="ij")
    sym = sum(4 * np.sin(0.5 * (a * X + b * Y)) ** 2 for a, b in dirs)
    return float(np.sqrt(sym.max() * 1.02))


def _prolong_potential(p, nxc, nyc):
    def up(A, axis):
        A = np.moveaxis(A, axis, 0)
        lo = np.concatenate([A[:1], A[:-1]])
        hi = np.concatenate([A[1:], A[-1:]])
        out = np.empty((2 * A.shape[0],) + A.shape[1:])
        out[0::2] = 0.75 * A + 0.25 * lo
        out[1::2] = 0.75 * A + 0.25 * hi
        return np.moveaxis(out, 0, axis)

    return up(up(p.reshape(nxc, nyc), 0), 1).ravel()


def _solve_flow(d, nx, ny, dx, dy, cfg):
    """Solve the unit-mass flow problem, warm-starting from a 2x coarser grid."""
    dirs = _directions(nx, ny, cfg.stencil)
    da = np.array([v[0] for v in dirs], dtype=np.int64)
    db = np.array([v[1] for v in dirs], dtype=np.int64)
    w = np.array([math.hypot(a * dx, b * dy) for a, b in dirs])
    eta = 0.99 / _norm_bound(dirs)
    omega = math.sqrt(cfg.tau_step / cfg.mu_step)
    f = np.zeros((len(dirs), nx * ny))
    phi = np.zeros(nx * ny)
    if cfg.multilevel and nx % 2 == 0 and ny % 2 == 0 and min(nx, ny) >= 2 * _MIN_COARSE:
        nxc, nyc = nx // 2, ny // 2
        dc = d.reshape(nxc, 2, nyc, 2).sum(axis=(1, 3)).ravel()
        fc, pc, omega, *_ = _solve_flow(dc, nxc, nyc, 2 * dx, 2 * dy, cfg)
        _pdhg.prolong_flow(nxc, nyc, da, db, fc, f)
        phi = _prolong_potential(pc, nxc, nyc)
    obj, it, res, conv, omega = _pdhg.solve(
        nx, ny, da, db, w, d, f, phi, eta, omega, cfg.max_iter, cfg.tol, cfg.check_every
    )
    return f, phi, omega, obj, it, res, conv, dirs


def route_flux(flow: np.ndarray, dirs, nx, ny, dx, dy) -> FluxField:
    """Turn edge flows into face fluxes with the same divergence.

    Each edge is split evenly between the two monotone staircase routes
    (first axis first, second axis first).
    """
    mx = np.zeros((nx, ny))
    my = np.zeros((nx, ny))
    for k, (a, b) in enumerate(dirs):
        F = 0.5 * flow[k].reshape(nx, ny)
        I, J = np.nonzero(F)
        if I.size == 0:
            continue
        v = F[I, J]
        s = 1 if b > 0 else -1

        def xsteps(i, j):
            for t in range(a):
                np.add.at(mx, (i + t + 1, j), v / dy)

        def ysteps(i, j):
            for t in range(abs(b)):
                if s > 0:
                    np.add.at(my, (i, j + t + 1), v / dx)
                else:
                    np.add.at(my, (i, j - t), -v / dx)

        xsteps(I, J)
        ysteps(I + a, J)
        ysteps(I, J)
        xsteps(I, J + b)
    return FluxField(nx, ny, dx, dy, mx, my)


def _validate_pair(rho1: GridFn, rho2: GridFn):
    if not rho1.same_grid(rho2):
        raise GridMismatch(
            f"grids differ: {rho1.shape} dx={rho1.dx} dy={rho1.dy} vs "
            f"{rho2.shape} dx={rho2.dx} dy={rho2.dy}"
        )
    if np.any(rho1.data < 0) or np.any(rho2.data < 0):
        raise NegativeDensity("densities must be non-negative")
    m1 = float(np.sum(rho1.data))
    m2 = float(np.sum(rho2.data))
    big = max(m1, m2)
    if big > 0 and abs(m1 - m2) > MASS_TOL * big:
        raise MassMismatch(f"masses differ: {m1 * rho1.cell_area} vs {m2 * rho2.cell_area}")
    a, b = rho1.data, rho2.data
    if m1 != m2:
        c = 0.5 * (m1 + m2)
        a, b = a * (c / m1), b * (c / m2)
    return a, b


def _zero_result(g: GridFn) -> EmdResult:
    return EmdResult(0.0, FluxField.zeros(g.nx, g.ny, g.dx, g.dy), 0, True)


def emd(rho1: GridFn, rho2: GridFn, cfg: EmdConfig = EmdConfig()) -> EmdResult:
    """Earth mover's distance between two equal-mass densities.

    Densities are per unit area, so the mass of a cell is its value times
    ``dx * dy``. The returned flux satisfies ``divergence(flux) = rho1 - rho2``
    up to the reported residual (relative to the moved mass).
    """
    a, b = _validate_pair(rho1, rho2)
    d = (a - b) * rho1.cell_area
    if not np.any(d):
        return _zero_result(rho1)
    d = d - d.mean()
    mass = float(np.sum(np.maximum(d, 0.0)))
    nx, ny, dx, dy = rho1.nx, rho1.ny, rho1.dx, rho1.dy
    f, _, _, obj, it, res, conv, dirs = _solve_flow(d / mass, nx, ny, dx, dy, cfg)
    f *= mass
    return EmdResult(
        value=obj * mass,
        flux=route_flux(f, dirs, nx, ny, dx, dy),
        iterations=int(it),
        converged=bool(conv),
        residual=float(res),
        directions=dirs,
        edge_flow=f.reshape(len(dirs), nx, ny),
    )


def structure(f: GridFn, cfg: EmdConfig = EmdConfig()) -> EmdResult:
    """Transport distance between the parts of ``f`` above and below its mean."""
    split = mean_split(f)
    if not np.any(split.plus.data):
        return _zero_result(f)
    return emd(split.plus, split.minus, cfg)


def emd_exact(rho1: GridFn, rho2: GridFn) -> float:
    """Exact transport cost between cell centres, by linear programming.

    Intended as a reference on small grids (at most 64 cells).
    """
    from scipy.optimize import linprog
    import scipy.sparse as sp

    n = rho1.nx * rho1.ny
    if n > EXACT_MAX_CELLS:
        raise TooLarge(f"{n} cells exceeds the exact solver limit of {EXACT_MAX_CELLS}")
    a, b = _validate_pair(rho1, rho2)
    total = float(np.sum(a))
    if total == 0.0:
        return 0.0
    a, b = a / total, b / total
    i, j = np.divmod(np.arange(n), rho1.ny)
    x = (i + 0.5) * rho1.dx
    y = (j + 0.5) * rho1.dy
    cost = np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])
    eye = sp.identity(n, format="csr")
    ones = sp.csr_matrix(np.ones((1, n)))
    A = sp.vstack([sp.kron(eye, ones), sp.kron(ones, eye)]).tocsr()
    res = linprog(
        cost.ravel(),
        A_eq=A,
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun) * total * rho1.cell_area


def structure_exact(f: GridFn) -> float:
    split = mean_split(f)
    if not np.any(split.plus.data):
        return 0.0
    return emd_exact(split.plus, split.minus)
