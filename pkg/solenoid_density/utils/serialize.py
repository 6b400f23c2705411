# solenoid_density/utils/serialize.py
from __future__ import annotations
import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from solenoid_density.core.circle import (
    CantorTransversal, DenjoyMap, GapSchedule, RotationNumber, TransversalMeasure, build_denjoy, invariant_measure,
)
from solenoid_density.core.forms import TrigPoly
from solenoid_density.core.solenoid import SuspensionSolenoid


def denjoy_document(h: DenjoyMap, measure: TransversalMeasure | None = None) -> dict:
    """
    Parameters that rebuild the map bit for bit, plus the band table of its
    invariant measure at ``h.depth``. Schedule keys are the orbit indices n.
    """
    measure = invariant_measure(h) if measure is None else measure
    tv = measure.transversal
    return {
        "rho": h.rho.value,
        "depth": h.depth,
        "schedule": {str(n): v for n, v in sorted(h.schedule.lengths.items())},
        "bands": np.stack([tv.lo, tv.hi], axis=1),
        "weights": measure.weights,
        "gaps": int(h.size),
        "cantor_length": h.cantor_length,
    }


def denjoy_from_document(doc: Mapping[str, Any]) -> DenjoyMap:
    schedule = GapSchedule({int(n): float(v) for n, v in doc["schedule"].items()})
    return build_denjoy(RotationNumber.from_value(float(doc["rho"])), schedule, int(doc["depth"]))


def measure_from_document(doc: Mapping[str, Any], h: DenjoyMap | None = None) -> TransversalMeasure:
    """Band measure of a Denjoy document; ``h`` supplies the profile inside each band."""
    bands = np.asarray(doc["bands"], float).reshape(-1, 2)
    tv = CantorTransversal(bands[:, 0].copy(), bands[:, 1].copy(), int(doc["depth"]), np.arange(len(bands)))
    return TransversalMeasure(tv, np.asarray(doc["weights"], float), profile=h)


def beta_document(beta: TrigPoly) -> dict:
    return {"n": beta.n, "coefficients": beta.table()}


def beta_from_document(doc: Mapping[str, Any]) -> TrigPoly:
    return TrigPoly.from_table(int(doc["n"]), doc["coefficients"])


def solenoid_document(sol: SuspensionSolenoid) -> dict:
    tv = sol.transversal
    return {
        "n": sol.n,
        "bands": tv.size,
        "depth": tv.depth,
        "cycles": [c.direction.tolist() for c in sol.cycles],
        "itinerary_counts": [int((sol.itinerary == i).sum()) for i in range(len(sol.cycles))],
        "normalization": sol.normalization,
        "orientation": sol.orientation,
        "scale": sol.scale,
        "transversal_mass": sol.measure.total,
        "core": {"base": sol.core.base.tolist(), "radius": sol.core.radius, "fraction": sol.core.fraction},
    }


def _numbers(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _numbers(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_numbers(v) for v in obj]
    if isinstance(obj, str):
        try:
            return float(obj)
        except ValueError:
            return obj
    return obj


def read_report(path: Path | str) -> dict:
    """Load a JSON report, turning the 17-digit float strings back into floats."""
    with open(path, "r", encoding="utf-8") as f:
        return _numbers(json.load(f))
