# solenoid_density/core/reports.py
from __future__ import annotations
import json
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd
from scipy.io import savemat

from .config import ReportFormat
from .forms import CurrentVector, Dictionary
from .levelset import LevelSetSolenoid, chain


def to_document(obj: Any) -> Any:
    """JSON-ready copy: floats become 17-digit strings so reruns are byte-identical."""
    if isinstance(obj, Mapping):
        return {str(k): to_document(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_document(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_document(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else str(x)
    return obj


def write_json(doc: Mapping, out_json: Path, title: str) -> None:
    out_json.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(to_document(doc), sort_keys=True, indent=2)
    out_json.write_text(text + "\n", encoding="utf-8")
    print(f"[OK] wrote report: {title} → {out_json}")


def _write_csv(df_out: pd.DataFrame, out_csv: Path, title: str) -> None:
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    df_out.to_csv(out_csv, index=False, encoding="utf-8", float_format="%.17g")
    print(f"[OK] wrote report: {title} → {out_csv}")


def _to_mat_cellstr(seq: list[str]) -> np.ndarray:
    """Make a MATLAB column cell array from a list of strings."""
    seq2 = [("" if s is None else str(s)) for s in seq]
    arr = np.empty((len(seq2), 1), dtype=object)
    arr[:, 0] = seq2
    return arr


def _write_mat(df_out: pd.DataFrame, out_mat: Path, varname: str, title: str) -> None:
    """
    Save a MATLAB struct with one field per column.
    Numeric columns become double (Nx1), everything else a cell array (Nx1).
    """
    out_mat.parent.mkdir(parents=True, exist_ok=True)
    mat_struct = {}
    for name in df_out.columns:
        col = df_out[name]
        if pd.api.types.is_numeric_dtype(col):
            mat_struct[str(name)] = col.to_numpy(dtype=float).reshape(-1, 1)
        else:
            mat_struct[str(name)] = _to_mat_cellstr(col.astype(str).replace("nan", "", regex=False).tolist())
    savemat(out_mat, {varname: mat_struct})
    print(f"[OK] wrote report: {title} → {out_mat}")


def write_table(df_out: pd.DataFrame, out_base: Path, title: str, fmt: ReportFormat = "csv",
                mat_variable: str = "report") -> None:
    """
    Write a table in the requested format.
    - out_base is a *base path without extension* (e.g., .../pairings)
    - fmt: "csv" | "mat" | "both"
    """
    if fmt in ("csv", "both"):
        _write_csv(df_out, out_base.with_suffix(".csv"), title)
    if fmt in ("mat", "both"):
        _write_mat(df_out, out_base.with_suffix(".mat"), mat_variable, title)


# ---------- tables ----------
def pairing_table(dictionary: Dictionary, **vectors: CurrentVector) -> pd.DataFrame:
    """One row per dictionary entry, one column per named current vector."""
    df = pd.DataFrame({
        "entry": [e.label for e in dictionary.entries],
        "flag": [e.flag for e in dictionary.entries],
        "sup": [e.sup for e in dictionary.entries],
    })
    for name, vec in vectors.items():
        df[name] = vec.pairings
    return df


def contour_table(ls: LevelSetSolenoid) -> pd.DataFrame:
    """Plot-ready polylines: one row per vertex."""
    rows = []
    for value, weight, level in zip(ls.weights.values, ls.weights.weights, ls.levels):
        for c, poly in enumerate(chain(level)):
            for v, (x, y) in enumerate(poly.vertices):
                rows.append((float(value), float(weight), c, v, float(x), float(y)))
    return pd.DataFrame(rows, columns=["value", "weight", "curve", "vertex", "x", "y"])
