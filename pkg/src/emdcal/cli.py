"""Command-line interface.

Exit codes: 0 success, 2 bad arguments/configuration/input, 3 numerical
failure, 4 file I/O error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import io
from .calibration import NoiseModel, ThetaGrid, sweep
from .emd_solver import EmdConfig, emd, structure
from .errors import InputError, NumericalError
from .experiments import ExperimentConfig, make_signal, run_experiment
from .forward_ops import OperatorFamily, random_lio
from .grid_core import GridFn
from .inversion import InversionConfig, reconstruct

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _global_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON configuration file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS, help="output file or directory")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    return p


def _solver_options(p, flux=True):
    p.add_argument("--max-iter", type=int)
    p.add_argument("--mu", type=float, help="initial primal step")
    p.add_argument("--tau", type=float, help="initial dual step")
    p.add_argument("--tol", type=float)
    if flux:
        p.add_argument("--flux", help="write the optimal flux here")


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = argparse.ArgumentParser(prog="emdcal", parents=[common],
                                     description="Structure-based calibration toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("emd", parents=[common], help="transport distance between two grids")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    _solver_options(p)

    p = sub.add_parser("structure", parents=[common], help="structure of one grid")
    p.add_argument("--f", required=True)
    _solver_options(p)

    p = sub.add_parser("make-op", parents=[common], help="random line-integral operator")
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--ny", type=int, required=True)

    p = sub.add_parser("invert", parents=[common], help="regularized reconstruction")
    p.add_argument("--op", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--reg", choices=["tv", "tikhonov"], default=None)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--bregman-mu", type=float)
    p.add_argument("--bregman-iters", type=int)

    p = sub.add_parser("calibrate", parents=[common], help="sweep a family of operators")
    p.add_argument("--op", action="append", required=True,
                   help="endpoint operator; give 2 (one parameter) or 4 (two parameters)")
    p.add_argument("--u", help="true signal grid (default: ring phantom)")
    p.add_argument("--theta-hat", type=float, nargs="+", required=True)
    p.add_argument("--snr", type=float, default=math.inf)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--reg", choices=["tv", "tikhonov"], default=None)
    p.add_argument("--lambda", dest="lam", type=float)
    _solver_options(p, flux=False)

    p = sub.add_parser("experiment", parents=[common], help="run a numbered experiment")
    p.add_argument("--id", required=True, choices=["1", "2", "3"])

    sub.add_parser("noise-scaling", parents=[common], help="structure of dyadic noise by level")
    sub.add_parser("restriction-study", parents=[common], help="structure of cell averages by level")
    return parser


def _load_config(args) -> dict:
    path = getattr(args, "config", None)
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object")
    return doc


def _emd_config(args, conf) -> EmdConfig:
    base = dict(conf.get("emd", {}))
    for key, attr in (("max_iter", "max_iter"), ("mu_step", "mu"), ("tau_step", "tau"), ("tol", "tol")):
        v = getattr(args, attr, None)
        if v is not None:
            base[key] = v
    try:
        return EmdConfig(**base)
    except TypeError as exc:
        raise InputError(str(exc)) from exc


def _inv_config(args, conf) -> InversionConfig:
    base = dict(conf.get("inversion", {}))
    for key, attr in (("regularizer", "reg"), ("lam", "lam"), ("bregman_mu", "bregman_mu"),
                      ("bregman_iters", "bregman_iters")):
        v = getattr(args, attr, None)
        if v is not None:
            base[key] = v
    try:
        return InversionConfig(**base)
    except TypeError as exc:
        raise InputError(str(exc)) from exc


def _require(args, name):
    v = getattr(args, name, None)
    if v is None:
        raise InputError(f"--{name} is required for this command")
    return v


def _report_emd(res, args):
    if getattr(args, "flux", None):
        io.write_flux(res.flux, args.flux)
    if not res.converged:
        print(f"warning: not converged after {res.iterations} iterations "
              f"(residual {res.residual:.2e})", file=sys.stderr)
    print(repr(res.value))


def _experiment_config(args, conf, experiment) -> ExperimentConfig:
    doc = dict(conf)
    doc["experiment"] = experiment
    if getattr(args, "seed", None) is not None:
        doc["operator_seed"] = args.seed
        doc["noise_seed"] = args.seed + 1
    if getattr(args, "out", None) is not None:
        doc["out"] = args.out
    if getattr(args, "threads", None) is not None:
        doc["threads"] = args.threads
    return ExperimentConfig.from_dict(doc)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    conf = _load_config(args)
    cmd = args.command
    if cmd == "emd":
        _report_emd(emd(io.read_grid(args.a), io.read_grid(args.b), _emd_config(args, conf)), args)
    elif cmd == "structure":
        _report_emd(structure(io.read_grid(args.f), _emd_config(args, conf)), args)
    elif cmd == "make-op":
        seed = getattr(args, "seed", conf.get("seed", 0))
        io.write_op(random_lio(seed, args.nx, args.ny), _require(args, "out"))
    elif cmd == "invert":
        L = io.read_op(args.op)
        b = io.read_grid(args.b)
        nx = int(round(math.sqrt(L.shape[1])))
        if nx * nx != L.shape[1]:
            raise InputError(f"{L.shape[1]} columns is not a square signal grid")
        if b.data.size != L.shape[0]:
            raise InputError(f"data has {b.data.size} entries but the operator has {L.shape[0]} rows")
        u = reconstruct(L, b.data, _inv_config(args, conf), nx)
        io.write_grid(GridFn(nx, nx, 1.0 / nx, 1.0 / nx, u), _require(args, "out"))
    elif cmd == "calibrate":
        ops = [io.read_op(p) for p in args.op]
        if len(ops) not in (2, 4):
            raise InputError("give 2 or 4 --op endpoints")
        fam = OperatorFamily(tuple(ops), 1 if len(ops) == 2 else 2)
        nx = int(round(math.sqrt(fam.shape[1])))
        u = io.read_grid(args.u) if args.u else make_signal("rings", nx)
        seed = getattr(args, "seed", conf.get("seed", 0))
        rep = sweep(fam, u, ThetaGrid.uniform(args.step, fam.dim), args.theta_hat,
                    NoiseModel(args.snr, seed), _inv_config(args, conf), _emd_config(args, conf),
                    threads=getattr(args, "threads", 1))
        out = Path(_require(args, "out"))
        io.write_json(rep.to_dict(), out / "report.json")
        io.write_table(rep.rows(), out / "report.csv")
        print(json.dumps({"contrasts": rep.contrasts, "minimizers": rep.minimizers}))
    else:
        experiment = {"noise-scaling": "noise-scaling", "restriction-study": "restriction"}.get(cmd) or args.id
        manifest = run_experiment(_experiment_config(args, conf, experiment))
        print(json.dumps(manifest["summary"], default=str))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
