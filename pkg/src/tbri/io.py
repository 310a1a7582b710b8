"""Plain-text and binary exports.

Floats are written with 17 significant digits, which round-trips every
IEEE double exactly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .basis import enumerate_basis
from .hamiltonian import SparseHamiltonian, TbriModel

FLOAT_FMT = "{:.17g}"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT.format(float(x))
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    Path(path).write_text(csv_text(header, rows))


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    """Numeric CSV with one header line; returns ``(header, 2-D float array)``."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = np.zeros((0, len(header)))
    return header, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if hasattr(obj, "value") and not isinstance(obj, (str, int)):
        return obj.value
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> None:
    Path(path).write_text(json_text(obj))


def model_header(model: TbriModel) -> dict:
    return {
        "N": model.n_particles,
        "M": model.n_levels,
        "V": model.interaction_strength,
        "seed": model.rng_seed,
        "sp_seed": model.sp_seed,
        "sp_mode": model.sp_mode.value,
        "operator_sum": model.operator_sum,
        "sp_energies": [FLOAT_FMT.format(x) for x in model.sp_energies],
    }


def matrix_text(h: SparseHamiltonian) -> str:
    """``row,col,value`` triplets: diagonal first, then the upper triangle."""
    n = h.dimension
    rows = [(i, i, h.diagonal[i]) for i in range(n)]
    rows.extend(zip(h.rows.tolist(), h.cols.tolist(), h.values.tolist()))
    return csv_text(("row", "col", "value"), rows)


def write_matrix(stem: Path, h: SparseHamiltonian, model: TbriModel) -> tuple[Path, Path]:
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    csv_path.write_text(matrix_text(h))
    write_json(json_path, {**model_header(model), "dimension": h.dimension, "n_offdiagonal": int(h.rows.size)})
    return csv_path, json_path


def read_matrix(stem: Path) -> tuple[SparseHamiltonian, dict]:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    rows, cols, vals = [], [], []
    with open(stem.with_suffix(".csv")) as fh:
        fh.readline()
        for line in fh:
            r, c, v = line.split(",")
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    rows, cols, vals = np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals)
    n = header["dimension"]
    diag = np.zeros(n)
    on = rows == cols
    diag[rows[on]] = vals[on]
    eps = np.array([float(x) for x in header["sp_energies"]])
    h0 = enumerate_basis(header["N"], header["M"]).unperturbed_energies(eps)
    h = SparseHamiltonian(n, diag, rows[~on], cols[~on], vals[~on], h0, header["N"], header["M"])
    return h, header


def eigenvalues_text(eigenvalues: np.ndarray) -> str:
    return csv_text(("alpha", "energy"), enumerate(eigenvalues.tolist()))


def write_coefficients(path: Path, coefficients: np.ndarray, header: dict) -> None:
    """Coefficient matrix as ``.npy`` next to a ``.json`` header."""
    path = Path(path)
    np.save(path.with_suffix(".npy"), coefficients)
    write_json(path.with_suffix(".json"), {**header, "shape": list(coefficients.shape), "layout": "C[k, alpha]"})


def read_coefficients(path: Path) -> np.ndarray:
    return np.load(Path(path).with_suffix(".npy"))
