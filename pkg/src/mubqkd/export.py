"""JSON and CSV writers for bases, networks, POVMs and simulation output.

CSV numbers use 12 significant digits and start with a ``# field:`` comment
line naming the resolved field; JSON keeps full double precision.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .galois import FieldCtx

CSV_FMT = "{:.12g}"


def _num(x) -> str:
    return CSV_FMT.format(float(x))


def field_header(ctx: FieldCtx) -> str:
    return f"# field: {ctx!r}"


def _open_csv(path: Path, ctx: FieldCtx):
    fh = open(path, "w", newline="")
    fh.write(field_header(ctx) + "\n")
    return fh, csv.writer(fh)


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def complex_pairs(M: np.ndarray) -> list:
    """Row-major nested lists of ``[re, im]``."""
    return np.stack([M.real, M.imag], axis=-1).tolist()


def mub_payload(ctx: FieldCtx, bases, construction: str) -> dict:
    return {
        "field": ctx.to_dict(),
        "d": ctx.d,
        "construction": construction,
        "z_basis_index": ctx.d,
        "bases": [complex_pairs(np.asarray(B)) for B in bases],
    }


def write_mub_csv(path, ctx: FieldCtx, bases) -> Path:
    """Rows ``r, m, n, re, im`` for entry ``B[r][m, n]``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh, w = _open_csv(path, ctx)
    with fh:
        w.writerow(["r", "m", "n", "re", "im"])
        for r, B in enumerate(bases):
            for (m, n), z in np.ndenumerate(np.asarray(B)):
                w.writerow([r, m, n, _num(z.real), _num(z.imag)])
    return path


def write_povm_csv(path, ctx: FieldCtx, povm: np.ndarray) -> Path:
    """Rows ``n, row, col, re, im`` for POVM element ``n``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh, w = _open_csv(path, ctx)
    with fh:
        w.writerow(["n", "row", "col", "re", "im"])
        for (n, a, b), z in np.ndenumerate(povm):
            w.writerow([n, a, b, _num(z.real), _num(z.imag)])
    return path


def write_tally_csv(path, tally) -> Path:
    """Rows ``r_a, n_a, r_b, n_b, count, prob``; basis index ``d`` is Z."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh, w = _open_csv(path, tally.ctx)
    with fh:
        w.writerow(["r_a", "n_a", "r_b", "n_b", "count", "prob"])
        for ra, na, rb, nb, count, prob in tally.rows():
            w.writerow([ra, na, rb, nb, count, _num(prob)])
    return path


def write_table_csv(path, ctx: FieldCtx | None, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if ctx is not None:
            fh.write(field_header(ctx) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else _num(v) for v in row])
    return path


def read_lambda_csv(path) -> np.ndarray:
    """``d x d`` matrix of Bell-diagonal weights, ``#`` lines ignored."""
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
