"""Parameter sweeps, noise models, contrasts and the two scaling studies."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .emd_solver import EmdConfig, structure
from .errors import EmdcalError, InputError, NonPositiveValue, ResolutionMismatch, ZeroSignal
from .forward_ops import OperatorFamily, family_at
from .grid_core import GridFn, norm_l2
from .inversion import InversionConfig, ResidualReport, residual


@dataclass(frozen=True)
class ThetaGrid:
    """Tensor grid of parameter values, one ascending tuple per axis."""

    axes: tuple

    def __post_init__(self):
        axes = tuple(tuple(float(v) for v in ax) for ax in self.axes)
        if len(axes) not in (1, 2):
            raise InputError("a theta grid has one or two axes")
        for ax in axes:
            if not ax:
                raise InputError("theta axes must be non-empty")
            if any(v < 0 or v > 1 for v in ax):
                raise InputError("theta values must lie in [0, 1]")
            if any(b <= a for a, b in zip(ax, ax[1:])):
                raise InputError("theta axes must be strictly ascending")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, step: float, dim: int = 1) -> ThetaGrid:
        n = int(round(1.0 / step))
        if not math.isclose(n * step, 1.0, rel_tol=1e-9):
            raise InputError(f"step {step} does not divide [0, 1]")
        ax = tuple(round(k / n, 12) for k in range(n + 1))
        return cls((ax,) * dim)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def points(self) -> list[tuple]:
        if self.dim == 1:
            return [(v,) for v in self.axes[0]]
        return [(a, b) for a in self.axes[0] for b in self.axes[1]]


@dataclass(frozen=True)
class NoiseModel:
    """White Gaussian noise scaled to an exact signal-to-noise ratio.

    ``target_snr = inf`` means no noise.
    """

    target_snr: float = math.inf
    seed: int = 0
    kind: str = "white"

    def __post_init__(self):
        if self.kind != "white":
            raise InputError(f"unknown noise kind {self.kind!r}")
        if not self.target_snr > 0:
            raise InputError("target_snr must be positive")


def inject_noise(b: GridFn, nm: NoiseModel) -> GridFn:
    if math.isinf(nm.target_snr):
        return b
    nb = np.linalg.norm(b.data)
    if nb == 0:
        raise ZeroSignal("cannot scale noise against a zero signal")
    eta = np.random.default_rng(nm.seed).standard_normal(b.data.size)
    eta *= nb / (nm.target_snr * np.linalg.norm(eta))
    return b.with_data(b.data + eta)


def contrast(values) -> float:
    """``(max - min) / (max + min)`` of positive values."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or np.any(~(v > 0)):
        raise NonPositiveValue("contrast needs positive values")
    hi, lo = v.max(), v.min()
    return float((hi - lo) / (hi + lo))


METRICS = ("struc", "l1", "l2")


@dataclass(eq=False)
class CalibrationReport:
    theta_grid: ThetaGrid
    thetas: list
    struc: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    valid: np.ndarray
    metadata: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict, repr=False)

    def values(self, metric: str) -> np.ndarray:
        return getattr(self, metric)

    @property
    def contrasts(self) -> dict:
        out = {}
        for m in METRICS:
            v = self.values(m)[self.valid]
            out[m] = contrast(v) if v.size and np.all(v > 0) else float("nan")
        return out

    @property
    def minimizers(self) -> dict:
        idx = np.flatnonzero(self.valid)
        out = {}
        for m in METRICS:
            if idx.size == 0:
                out[m] = None
                continue
            v = self.values(m)[idx]
            out[m] = self.thetas[int(idx[np.argmin(v)])]
        return out

    def rows(self) -> list[dict]:
        out = []
        for k, th in enumerate(self.thetas):
            out.append({
                "theta1": th[0],
                "theta2": th[1] if len(th) > 1 else float("nan"),
                "struc": float(self.struc[k]),
                "l1": float(self.l1[k]),
                "l2": float(self.l2[k]),
                "valid": bool(self.valid[k]),
            })
        return out

    def to_dict(self) -> dict:
        return {
            "theta_axes": [list(a) for a in self.theta_grid.axes],
            "records": self.rows(),
            "contrasts": self.contrasts,
            "minimizers": {k: (list(v) if v is not None else None) for k, v in self.minimizers.items()},
            "metadata": self.metadata,
        }


def sweep(fam: OperatorFamily, u_true: GridFn, grid: ThetaGrid, theta_hat, nm: NoiseModel,
          inv: InversionConfig = InversionConfig(), emd_cfg: EmdConfig = EmdConfig(),
          threads: int = 1, keep=()) -> CalibrationReport:
    """Evaluate residual metrics at every grid point.

    The measurement is simulated once with ``L_theta_hat`` and one noise
    draw is shared by all grid points. Points whose evaluation raises are
    marked invalid and their error text is kept in ``metadata["errors"]``.
    Residual reports for the grid points listed in ``keep`` are returned in
    ``details``.
    """
    if grid.dim != fam.dim:
        raise InputError(f"grid has {grid.dim} axes but the family has {fam.dim}")
    theta_hat = tuple(float(v) for v in np.atleast_1d(theta_hat))
    for ax, v in zip(grid.axes, theta_hat):
        if not ax[0] <= v <= ax[-1]:
            raise InputError(f"theta_hat {theta_hat} outside the grid")
    m = fam.shape[0]
    ny = int(round(math.sqrt(m)))
    if ny * ny != m:
        raise InputError(f"{m} rows is not a square measurement grid")
    if u_true.nx * u_true.ny != fam.shape[1]:
        raise InputError("signal size does not match the operator")
    b = GridFn(ny, ny, 1.0 / ny, 1.0 / ny, family_at(fam, theta_hat) @ u_true.data)
    b_noisy = inject_noise(b, nm)
    thetas = grid.points()
    keep = {tuple(float(v) for v in np.atleast_1d(k)) for k in keep}

    def evaluate(th):
        try:
            return residual(family_at(fam, th), b_noisy, inv, emd_cfg, nx=u_true.nx)
        except EmdcalError as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(evaluate, thetas))
    else:
        results = [evaluate(th) for th in thetas]

    n = len(thetas)
    struc, l1, l2 = np.full(n, np.nan), np.full(n, np.nan), np.full(n, np.nan)
    valid = np.zeros(n, dtype=bool)
    errors, unconverged, details = {}, [], {}
    for k, (th, r) in enumerate(zip(thetas, results)):
        if isinstance(r, ResidualReport):
            struc[k], l1[k], l2[k] = r.struc_value, r.l1_value, r.l2_value
            valid[k] = True
            if not r.emd_converged:
                unconverged.append(list(th))
            if th in keep:
                details[th] = r
        else:
            errors[str(list(th))] = f"{type(r).__name__}: {r}"
    meta = {
        "theta_hat": list(theta_hat),
        "noise": {"kind": nm.kind, "target_snr": nm.target_snr, "seed": nm.seed},
        "inversion": vars(inv).copy(),
        "emd": vars(emd_cfg).copy(),
        "errors": errors,
        "emd_unconverged": unconverged,
        "signal_norm": norm_l2(b),
    }
    details["measurement"] = b
    details["measurement_noisy"] = b_noisy
    return CalibrationReport(grid, thetas, struc, l1, l2, valid, meta, details)


@dataclass(frozen=True)
class DyadicNoiseSpec:
    """I.i.d. weights on the ``2**(ell*d)`` dyadic cubes of the unit cube."""

    d: int = 2
    ell: int = 0
    mu: float = 0.0
    sigma: float = 1.0
    distribution: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.ell < 0:
            raise InputError("need d >= 1 and ell >= 0")
        if self.distribution not in ("gaussian", "uniform"):
            raise InputError(f"unknown distribution {self.distribution!r}")
        if self.sigma < 0:
            raise InputError("sigma must be non-negative")


def dyadic_weights(spec: DyadicNoiseSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    n = 2 ** (spec.ell * spec.d)
    if spec.distribution == "gaussian":
        return spec.mu + spec.sigma * rng.standard_normal(n)
    half = math.sqrt(3.0) * spec.sigma
    return rng.uniform(spec.mu - half, spec.mu + half, n)


def dyadic_noise(spec: DyadicNoiseSpec, resolution: int | None = None) -> GridFn:
    """Piecewise-constant noise sampled on a ``resolution``-per-side grid (d = 1 or 2)."""
    k = 2 ** spec.ell
    n = k if resolution is None else resolution
    if spec.d not in (1, 2):
        raise InputError("grids are available for d = 1 and d = 2 only")
    if n % k:
        raise ResolutionMismatch(f"resolution {n} is not divisible by 2**{spec.ell}")
    w = dyadic_weights(spec)
    rep = n // k
    if spec.d == 1:
        return GridFn(1, n, 1.0, 1.0 / n, np.repeat(w, rep))
    block = np.kron(w.reshape(k, k), np.ones((rep, rep)))
    return GridFn(n, n, 1.0 / n, 1.0 / n, block)


def noise_bound(ell: int) -> float:
    """``-eps log2(eps)`` with ``eps = 2**-ell``."""
    return ell * 2.0 ** -ell


STUDY_EMD = EmdConfig(max_iter=2000, tol=1e-4)


def noise_scaling_study(d: int = 2, ell_range=range(2, 8), trials: int = 32, sigma: float = 1.0,
                        seed: int = 0, resolution: int = 128, mu: float = 0.0,
                        distribution: str = "gaussian", emd_cfg: EmdConfig = STUDY_EMD) -> list[dict]:
    """Average structure and squared L2 norm of dyadic noise per level.

    Structure is solved for ``d <= 2`` only; for larger ``d`` the squared norm
    comes straight from the cube weights.
    """
    rows = []
    streams = np.random.SeedSequence(seed).spawn(len(list(ell_range)))
    for ell, ss in zip(ell_range, streams):
        seeds = [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(trials)]
        strucs, sq = [], []
        for s in seeds:
            spec = DyadicNoiseSpec(d, ell, mu, sigma, distribution, s)
            if d <= 2:
                h = dyadic_noise(spec, resolution)
                strucs.append(structure(h, emd_cfg).value)
                sq.append(norm_l2(h) ** 2)
            else:
                sq.append(float(np.mean(dyadic_weights(spec) ** 2)))
        mean_struc = float(np.mean(strucs)) if strucs else float("nan")
        bound = sigma * noise_bound(ell) if d == 2 else float("nan")
        rows.append({
            "ell": ell,
            "mean_struc": mean_struc,
            "std_struc": float(np.std(strucs)) if strucs else float("nan"),
            "mean_l2sq": float(np.mean(sq)),
            "bound": bound,
            "within_bound": bool(mean_struc <= bound) if d == 2 else None,
        })
    return rows


SMOOTH_FIELDS: dict[str, Callable] = {
    "ramp": lambda y1, y2: y1,
    "sine": lambda y1, y2: np.sin(np.pi * y1) * np.sin(np.pi * y2),
    "constant": lambda y1, y2: np.ones_like(y1),
}


def cell_averages(phi: Callable, n: int, order: int = 6) -> GridFn:
    """Averages of ``phi`` over the cells of an ``n`` by ``n`` grid (Gauss-Legendre)."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    edges = np.arange(n) / n
    pts = (edges[:, None] + x[None, :] / n).ravel()  # (n*order,)
    Y1, Y2 = np.meshgrid(pts, pts, indexing="ij")
    vals = np.asarray(phi(Y1, Y2), dtype=float).reshape(n, order, n, order)
    avg = np.einsum("iajb,a,b->ij", vals, w, w)
    return GridFn(n, n, 1.0 / n, 1.0 / n, avg)


def restriction_study(phi, ell_range=range(3, 7), ell_max: int = 7,
                      emd_cfg: EmdConfig = EmdConfig(max_iter=20000, tol=1e-7)) -> dict:
    """Structure of cell averages of ``phi`` against the finest level.

    ``phi`` is a callable ``phi(y1, y2)`` or a key of ``SMOOTH_FIELDS``. Each
    level is solved on its own ``2**ell`` grid. The fitted order is minus the
    least-squares slope of ``log2(gap)`` against ``ell``.
    """
    if isinstance(phi, str):
        phi = SMOOTH_FIELDS[phi]
    ells = list(ell_range)
    if ell_max <= max(ells):
        raise InputError("ell_max must exceed every studied level")
    ref = structure(cell_averages(phi, 2 ** ell_max), emd_cfg).value
    rows = []
    for ell in ells:
        v = structure(cell_averages(phi, 2 ** ell), emd_cfg).value
        rows.append({"ell": ell, "struc": v, "gap": abs(v - ref)})
    gaps = np.array([r["gap"] for r in rows])
    for a, b in zip(rows, rows[1:]):
        b["ratio"] = a["gap"] / b["gap"] if b["gap"] > 0 else float("inf")
    order = float("nan")
    if np.all(gaps > 0) and len(ells) > 1:
        order = float(-np.polyfit(ells, np.log2(gaps), 1)[0])
    return {"reference": ref, "ell_max": ell_max, "rows": rows, "order": order}
