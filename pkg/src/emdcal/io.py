"""JSON readers and writers for grids, fluxes, sparse operators and tables."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError
from .grid_core import FluxField, GridFn


def _load(path) -> dict:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object")
    return doc


def _dump(doc: dict, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, allow_nan=True)
        fh.write("\n")


def _field(doc, key, path):
    try:
        return doc[key]
    except KeyError:
        raise InputError(f"{path}: missing field {key!r}") from None


def grid_to_dict(g: GridFn) -> dict:
    return {"nx": g.nx, "ny": g.ny, "dx": g.dx, "dy": g.dy, "data": g.data.tolist()}


def grid_from_dict(doc: dict, path="<grid>") -> GridFn:
    return GridFn(*(_field(doc, k, path) for k in ("nx", "ny", "dx", "dy", "data")))


def flux_to_dict(m: FluxField) -> dict:
    return {"nx": m.nx, "ny": m.ny, "dx": m.dx, "dy": m.dy, "mx": m.mx.tolist(), "my": m.my.tolist()}


def flux_from_dict(doc: dict, path="<flux>") -> FluxField:
    return FluxField(*(_field(doc, k, path) for k in ("nx", "ny", "dx", "dy", "mx", "my")))


def op_to_dict(L) -> dict:
    coo = sp.coo_matrix(L)
    order = np.lexsort((coo.col, coo.row))
    trip = [[int(r), int(c), float(v)] for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])]
    return {"rows": int(L.shape[0]), "cols": int(L.shape[1]), "triplets": trip}


def op_from_dict(doc: dict, path="<op>") -> sp.csr_matrix:
    rows, cols = int(_field(doc, "rows", path)), int(_field(doc, "cols", path))
    trip = np.asarray(_field(doc, "triplets", path), dtype=float).reshape(-1, 3)
    r, c = trip[:, 0].astype(np.int64), trip[:, 1].astype(np.int64)
    if trip.size and (r.min() < 0 or c.min() < 0 or r.max() >= rows or c.max() >= cols):
        raise InputError(f"{path}: triplet index out of range")
    return sp.csr_matrix((trip[:, 2], (r, c)), shape=(rows, cols))


def read_grid(path) -> GridFn:
    return grid_from_dict(_load(path), path)


def write_grid(g: GridFn, path):
    _dump(grid_to_dict(g), path)


def read_flux(path) -> FluxField:
    return flux_from_dict(_load(path), path)


def write_flux(m: FluxField, path):
    _dump(flux_to_dict(m), path)


def read_op(path) -> sp.csr_matrix:
    return op_from_dict(_load(path), path)


def write_op(L, path):
    _dump(op_to_dict(L), path)


def read_json(path) -> dict:
    return _load(path)


def write_json(doc: dict, path):
    _dump(doc, path)


def write_table(rows: list[dict], path):
    """Write dict rows as CSV; floats keep full precision."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    cols = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in (row[c] for c in cols)])


def read_table(path) -> list[dict]:
    def parse(v):
        for conv in (int, float):
            try:
                return conv(v)
            except ValueError:
                pass
        return {"True": True, "False": False, "None": None}.get(v, v)

    with open(path, newline="") as fh:
        return [{k: parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]
