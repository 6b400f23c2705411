# solenoid_density/core/pipeline.py
from __future__ import annotations
import logging
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from .circle import (band_indicators, birkhoff_spread, denjoy_system, invariance_defect,
                     rotation_number_estimate, sample_starts, semiconjugacy_defect)
from .config import RunCfg
from .forms import build_dictionary
from .levelset import build_field, lemma_alpha_certificate
from .model import RunResult
from .reports import contour_table, pairing_table, write_json, write_table
from .solenoid import homology_class, leaf_limit_experiment, realize_class, rs_current
from .surgery import TargetCurrent, approximate_current, build_beta
from ..utils.serialize import beta_document, denjoy_document, solenoid_document

_LOG = logging.getLogger(__name__)


def cmd_denjoy(cfg: RunCfg) -> RunResult:
    diag = cfg.diagnostics
    h = cfg.denjoy.build()
    rho = h.rho.value
    rho_est = rotation_number_estimate(h, diag.rotation_iterations)
    system = denjoy_system(h)
    tv = system.transversal
    observables = band_indicators(tv, diag.observables)
    starts = sample_starts(system, diag.birkhoff_starts)
    spread = birkhoff_spread(system, observables, starts, diag.birkhoff_iterations)
    spread_long = birkhoff_spread(system, observables, starts, 10 * diag.birkhoff_iterations)
    semi = semiconjugacy_defect(h)
    inv = invariance_defect(system)
    _LOG.info("denjoy: rho_est - rho = %.3e, spread %.3e -> %.3e", rho_est - rho, spread, spread_long)

    checks = {
        "rotation_number": abs(rho_est - rho) <= diag.rotation_tolerance,
        "semiconjugacy": semi <= 1e-12,
        "invariance": inv <= 1e-12,
        "unique_ergodicity": spread <= diag.spread_threshold,
        "spread_decreases": spread_long < spread,
    }
    report = {
        "rho": rho, "convergents": [f"{c.numerator}/{c.denominator}" for c in h.rho.convergents],
        "rho_estimate": rho_est, "rotation_iterations": diag.rotation_iterations,
        "semiconjugacy_defect": semi, "invariance_defect": inv,
        "birkhoff": {"iterations": diag.birkhoff_iterations, "starts": diag.birkhoff_starts,
                     "observables": diag.observables, "spread": spread, "spread_10x": spread_long},
        "map": denjoy_document(h, system.measure), "bands": tv.size,
        "checks": checks,
    }
    bands = pd.DataFrame({"lo": tv.lo, "hi": tv.hi, "weight": system.measure.weights})
    return RunResult("denjoy", checks, report, {"bands": bands})


def cmd_realize(cfg: RunCfg) -> RunResult:
    a = np.asarray(cfg.realize_a, float)
    res = cfg.forms.curve_resolution
    sol = realize_class(a, cfg.denjoy, cfg.solenoid, resolution=res)
    dictionary = build_dictionary(a.size, 1, cfg.forms.degree)
    vec = rs_current(sol, dictionary, res, cfg.runtime.workers())
    cls = homology_class(sol, resolution=res)
    class_err = float(np.max(np.abs(cls - a / sol.scale)))
    exact = dictionary.indices("exact")
    closed_err = float(np.max(np.abs(vec.pairings[exact]), initial=0.0))
    checks = {"class": class_err <= 1e-3, "closed": closed_err <= 1e-3}
    report = {
        "a": a, "scale": sol.scale, "class": cls, "class_error": class_err,
        "closedness": closed_err, "mass": vec.mass, "bands": sol.transversal.size,
        "dictionary": dictionary.key, "solenoid": solenoid_document(sol), "checks": checks,
    }
    return RunResult("realize", checks, report, {"pairings": pairing_table(dictionary, solenoid=vec)})


def cmd_leaf_limit(cfg: RunCfg) -> RunResult:
    ll = cfg.leaf_limit
    res = cfg.forms.curve_resolution
    sol = realize_class(ll.a, cfg.denjoy, cfg.solenoid, resolution=res)
    dictionary = build_dictionary(len(ll.a), 1, cfg.forms.degree)
    table = leaf_limit_experiment(sol, ll.start, ll.schedule, dictionary, res, cfg.runtime.workers())
    d = table["weak_distance"].to_numpy()
    checks = {
        "limit": bool(d[-1] <= ll.threshold),
        "decay": bool(d[0] >= ll.decay_factor * d[-1]),
        "monotone": bool(np.all(d[1:] <= 1.1 * d[:-1])),
    }
    report = {"a": list(ll.a), "schedule": list(ll.schedule), "weak_distance": d,
              "cap_ratio": table["cap_ratio"].to_numpy(), "checks": checks}
    return RunResult("leaf-limit", checks, report, {"leaf_limit": table})


def cmd_levelset(cfg: RunCfg) -> RunResult:
    lv = cfg.levelset
    threads = cfg.runtime.workers()
    bundle = build_field(lv.field)
    dictionary = build_dictionary(2, 1, cfg.forms.degree)
    cert = lemma_alpha_certificate(bundle, lv.epsilon, lv.epsilon_measure, dictionary, lv.grid,
                                   lv.cantor_depth, lv.values, cfg.forms.torus_resolution, threads)
    report = cert.summary()
    checks = {"budget": cert.passed}
    if lv.refinement:
        finer = lemma_alpha_certificate(bundle, lv.epsilon / 2, lv.epsilon_measure / 2, dictionary, 2 * lv.grid,
                                        lv.cantor_depth, lv.values, cfg.forms.torus_resolution, threads)
        report["refined"] = finer.summary()
        checks["refinement"] = finer.observed <= 1.1 * cert.observed
    report["checks"] = checks
    tables = {"pairings": pairing_table(dictionary, direct=cert.direct, solenoid=cert.solenoid,
                                        lebesgue=cert.lebesgue),
              "contours": contour_table(cert.levelset)}
    return RunResult("levelset", checks, report, tables)


def cmd_approximate(cfg: RunCfg) -> RunResult:
    ap = cfg.approximate
    dictionary = build_dictionary(2, 1, ap.degree)
    target = TargetCurrent(np.asarray(ap.a, float), build_beta(ap.beta), dictionary)
    _, vec, report = approximate_current(target, ap.eps, cfg)
    report["target"]["beta"] = beta_document(target.beta)
    errors = pd.DataFrame({"entry": [e.label for e in dictionary.entries],
                           "flag": [e.flag for e in dictionary.entries],
                           "output": vec.pairings, "abs_error": report["entry_errors"]})
    return RunResult("approximate", dict(report["checks"]), report, {"errors": errors})


COMMANDS: dict[str, Callable[[RunCfg], RunResult]] = {
    "denjoy": cmd_denjoy,
    "realize": cmd_realize,
    "leaf-limit": cmd_leaf_limit,
    "levelset": cmd_levelset,
    "approximate": cmd_approximate,
}


def run_command(name: str, cfg: RunCfg, out_root: Path) -> RunResult:
    """Run one command and write its JSON report and tables under out_root/<name>/."""
    if name not in COMMANDS:
        raise ValueError(f"unknown command {name!r}")
    result = COMMANDS[name](cfg)
    out_dir = out_root / name
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json({**result.report, "command": name, "pass": result.passed}, out_dir / "report.json", f"{name} run")
    for base, table in result.tables.items():
        write_table(table, out_dir / base, f"{name} {base}", fmt=cfg.reports.format,
                    mat_variable=cfg.reports.mat_variable)
    if not result.passed:
        failed = [k for k, ok in result.checks.items() if not ok]
        _LOG.warning("%s: failed checks %s", name, ", ".join(failed))
    return result
