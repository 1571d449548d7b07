"""Experiment drivers: configuration, synthetic signal and artifact emission."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .calibration import (
    CalibrationReport,
    NoiseModel,
    ThetaGrid,
    noise_scaling_study,
    restriction_study,
    sweep,
    STUDY_EMD,
)
from .emd_solver import EmdConfig
from .errors import InputError
from .forward_ops import OperatorFamily, family_at, random_lio
from .grid_core import GridFn
from .inversion import InversionConfig, residual

EXPERIMENTS = ("1", "2", "3", "noise-scaling", "restriction")


def make_signal(kind: str = "rings", n: int = 64, radii=(0.12, 0.24, 0.36),
                values=(1.0, 0.2, 1.0, 0.2)) -> GridFn:
    """Concentric-ring phantom on an ``n`` by ``n`` grid over the unit square.

    ``values[k]`` fills the annulus between ``radii[k-1]`` and ``radii[k]``
    around the centre; the last value fills everything outside.
    """
    if kind != "rings":
        raise InputError(f"unknown signal kind {kind!r}")
    if n < 8:
        raise InputError("ring phantom needs n >= 8")
    if len(values) != len(radii) + 1 or list(radii) != sorted(radii):
        raise InputError("need ascending radii and one more value than radii")
    c = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(c, c, indexing="ij")
    r = np.hypot(X - 0.5, Y - 0.5)
    out = np.full((n, n), float(values[-1]))
    for rad, val in reversed(list(zip(radii, values))):
        out[r < rad] = val
    return GridFn(n, n, 1.0 / n, 1.0 / n, out)


def _sub(cls, doc):
    if isinstance(doc, cls):
        return doc
    if not isinstance(doc, dict):
        raise InputError(f"expected an object for {cls.__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(doc) - names
    if extra:
        raise InputError(f"unknown {cls.__name__} keys: {sorted(extra)}")
    return cls(**doc)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "1"
    operator_seed: int = 1
    noise_seed: int = 2
    nx: int = 64
    ny: int = 100
    exp3_nx: int = 25
    ny_list: tuple = (100, 75, 50, 25)
    snr: float = 25.0
    snr_list: tuple = (25.0, 5.0)
    theta_step: float = 0.05
    exp1_probe_thetas: tuple = (0.04, 0.48)
    rings_radii: tuple = (0.12, 0.24, 0.36)
    rings_values: tuple = (1.0, 0.2, 1.0, 0.2)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    emd: EmdConfig = field(default_factory=EmdConfig)
    study_emd: EmdConfig = STUDY_EMD
    noise_ells: tuple = (2, 3, 4, 5, 6, 7)
    noise_trials: int = 32
    noise_sigma: float = 1.0
    noise_resolution: int = 128
    restriction_fields: tuple = ("ramp", "sine")
    restriction_ells: tuple = (3, 4, 5, 6)
    restriction_ell_max: int = 7
    out: str = "out"
    threads: int = 1

    def __post_init__(self):
        if str(self.experiment) not in EXPERIMENTS:
            raise InputError(f"experiment must be one of {EXPERIMENTS}")
        object.__setattr__(self, "experiment", str(self.experiment))
        for name in ("ny_list", "snr_list", "exp1_probe_thetas", "rings_radii", "rings_values",
                     "noise_ells", "restriction_fields", "restriction_ells"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "inversion", _sub(InversionConfig, self.inversion))
        object.__setattr__(self, "emd", _sub(EmdConfig, self.emd))
        object.__setattr__(self, "study_emd", _sub(EmdConfig, self.study_emd))
        if self.threads < 1:
            raise InputError("threads must be at least 1")

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(doc) - names
        if extra:
            raise InputError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InputError(str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _seeds(base: int, n: int) -> list[int]:
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(base).spawn(n)]


def make_family(seed: int, dim: int, nx: int, ny: int) -> OperatorFamily:
    """Random line-integral endpoints; the same seed gives the same paths at any ``ny``."""
    return OperatorFamily(tuple(random_lio(s, nx, ny) for s in _seeds(seed, 2 * dim)), dim)


def _write_report(rep: CalibrationReport, out: Path, stem: str) -> list[str]:
    io.write_json(rep.to_dict(), out / f"{stem}.json")
    io.write_table(rep.rows(), out / f"{stem}.csv")
    return [f"{stem}.json", f"{stem}.csv"]


def _summary_row(rep: CalibrationReport, **extra) -> dict:
    row = dict(extra)
    mins, cons = rep.minimizers, rep.contrasts
    for m in ("struc", "l1", "l2"):
        th = mins[m] or (float("nan"),)
        row[f"theta_{m}"] = " ".join(f"{v:g}" for v in th)
        row[f"cont_{m}"] = cons[m]
    return row


def _experiment_1(cfg, out):
    u = make_signal("rings", cfg.nx, cfg.rings_radii, cfg.rings_values)
    fam = make_family(cfg.operator_seed, 1, cfg.nx, cfg.ny)
    nm = NoiseModel(cfg.snr, cfg.noise_seed)
    rep = sweep(fam, u, ThetaGrid.uniform(cfg.theta_step, 1), (0.0,), nm, cfg.inversion, cfg.emd,
                threads=cfg.threads)
    files = _write_report(rep, out, "exp1_report")
    io.write_grid(u, out / "signal.grid.json")
    io.write_grid(rep.details["measurement"], out / "measurement.grid.json")
    io.write_grid(rep.details["measurement_noisy"], out / "measurement_noisy.grid.json")
    files += ["signal.grid.json", "measurement.grid.json", "measurement_noisy.grid.json"]
    b_noisy = rep.details["measurement_noisy"]
    for th in cfg.exp1_probe_thetas:
        r = residual(family_at(fam, (th,)), b_noisy, cfg.inversion, cfg.emd, nx=cfg.nx)
        tag = f"{th:g}"
        io.write_grid(r.residual, out / f"residual_theta_{tag}.grid.json")
        io.write_grid(r.reconstruction, out / f"reconstruction_theta_{tag}.grid.json")
        io.write_flux(r.flux, out / f"flux_theta_{tag}.flux.json")
        files += [f"residual_theta_{tag}.grid.json", f"reconstruction_theta_{tag}.grid.json",
                  f"flux_theta_{tag}.flux.json"]
    rows = [_summary_row(rep, snr=cfg.snr)]
    io.write_table(rows, out / "exp1_summary.csv")
    return files + ["exp1_summary.csv"], rows


def _experiment_2(cfg, out):
    u = make_signal("rings", cfg.nx, cfg.rings_radii, cfg.rings_values)
    fam = make_family(cfg.operator_seed, 2, cfg.nx, cfg.ny)
    grid = ThetaGrid.uniform(cfg.theta_step, 2)
    files, rows = [], []
    for snr in cfg.snr_list:
        rep = sweep(fam, u, grid, (0.5, 0.5), NoiseModel(snr, cfg.noise_seed), cfg.inversion, cfg.emd,
                    threads=cfg.threads)
        files += _write_report(rep, out, f"exp2_report_snr{snr:g}")
        rows.append(_summary_row(rep, snr=snr))
    io.write_table(rows, out / "exp2_contrasts.csv")
    return files + ["exp2_contrasts.csv"], rows


def _experiment_3(cfg, out):
    u = make_signal("rings", cfg.exp3_nx, cfg.rings_radii, cfg.rings_values)
    grid = ThetaGrid.uniform(cfg.theta_step, 2)
    files, rows = [], []
    for ny in cfg.ny_list:
        fam = make_family(cfg.operator_seed, 2, cfg.exp3_nx, ny)
        rep = sweep(fam, u, grid, (0.5, 0.5), NoiseModel(cfg.snr, cfg.noise_seed), cfg.inversion,
                    cfg.emd, threads=cfg.threads)
        files += _write_report(rep, out, f"exp3_report_ny{ny}")
        rows.append(_summary_row(rep, ny=ny))
    io.write_table(rows, out / "exp3_table.csv")
    return files + ["exp3_table.csv"], rows


def _noise_scaling(cfg, out):
    rows = noise_scaling_study(2, cfg.noise_ells, cfg.noise_trials, cfg.noise_sigma,
                               cfg.noise_seed, cfg.noise_resolution, emd_cfg=cfg.study_emd)
    io.write_table(rows, out / "noise_scaling.csv")
    return ["noise_scaling.csv"], rows


def _restriction(cfg, out):
    files, summary = [], []
    for name in cfg.restriction_fields:
        res = restriction_study(name, cfg.restriction_ells, cfg.restriction_ell_max)
        io.write_table(res["rows"], out / f"restriction_{name}.csv")
        files.append(f"restriction_{name}.csv")
        summary.append({"field": name, "order": res["order"], "reference": res["reference"]})
    io.write_table(summary, out / "restriction_orders.csv")
    return files + ["restriction_orders.csv"], summary


_DRIVERS = {
    "1": _experiment_1,
    "2": _experiment_2,
    "3": _experiment_3,
    "noise-scaling": _noise_scaling,
    "restriction": _restriction,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one experiment and write its artifacts plus ``manifest.json`` to ``cfg.out``.

    On error a ``FAILED`` marker holding the message is written before the
    exception propagates.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    try:
        files, rows = _DRIVERS[cfg.experiment](cfg, out)
    except Exception as exc:
        marker.write_text(f"{type(exc).__name__}: {exc}\n")
        raise
    manifest = {"experiment": cfg.experiment, "config": cfg.to_dict(), "files": sorted(files),
                "summary": rows}
    io.write_json(json.loads(json.dumps(manifest, default=_jsonable)), out / "manifest.json")
    return manifest


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
