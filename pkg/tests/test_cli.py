import json
from pathlib import Path
import tempfile
import time
import unittest
from unittest import mock

import numpy as np
import pandas as pd
import yaml
from scipy.io import loadmat

from solenoid_density.core.circle import GOLDEN, GapSchedule, build_denjoy, invariant_measure
from solenoid_density.core.config import RunCfg, load_config
from solenoid_density.core.forms import TrigPoly
from solenoid_density.core.pipeline import run_command
from solenoid_density.core.reports import to_document, write_json, write_table
from solenoid_density.main import main
from solenoid_density.utils.serialize import (
    beta_document, beta_from_document, denjoy_document, denjoy_from_document, measure_from_document, read_report,
)

_SMALL = {
    "denjoy": {"schedule_range": 64, "depth": 16},
    "diagnostics": {"birkhoff_iterations": 2000, "birkhoff_starts": 10, "observables": 4,
                    "spread_threshold": 0.05, "rotation_iterations": 20000},
    "forms": {"degree": 1, "torus_resolution": 64, "curve_resolution": 16},
    "leaf_limit": {"schedule": [10, 1000], "threshold": 0.05, "decay_factor": 2.0},
    "levelset": {"grid": 64, "cantor_depth": 3, "refinement": False},
    "runtime": {"threads": 1},
}


def _write_config(tmpdir: Path, doc: dict) -> Path:
    path = tmpdir / "run.yaml"
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def _merged(doc: dict) -> dict:
    raw = load_config()
    for k, v in doc.items():
        raw[k] = {**raw.get(k, {}), **v}
    return raw


class ConfigErrorTests(unittest.TestCase):
    def test_rational_rotation_number_exits_with_config_error(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            cfg = _write_config(Path(tmpdir), {"denjoy": {"rho": 0.5}})
            self.assertEqual(main(["denjoy", "--config", str(cfg), "--out", tmpdir]), 2)
            self.assertFalse((Path(tmpdir) / "denjoy" / "report.json").exists())

    def test_bad_report_format_exits_with_config_error(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            cfg = _write_config(Path(tmpdir), {"reports": {"format": "xlsx"}})
            self.assertEqual(main(["realize", "--config", str(cfg), "--out", tmpdir]), 2)

    def test_missing_config_file(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            self.assertEqual(main(["realize", "--config", str(Path(tmpdir) / "nope.yaml")]), 2)

    def test_unknown_command_is_a_usage_error(self):
        with self.assertRaises(SystemExit) as ctx:
            main(["teleport"])
        self.assertEqual(ctx.exception.code, 2)

    def test_null_class_is_rejected_at_run_time(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            cfg = _write_config(Path(tmpdir), {**_SMALL, "realize": {"a": [0.0, 0.0]}})
            self.assertEqual(main(["realize", "--config", str(cfg), "--out", tmpdir]), 2)


class CommandTests(unittest.TestCase):
    def test_denjoy_writes_report_and_bands(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            cfg = _write_config(Path(tmpdir), _SMALL)
            code = main(["denjoy", "--config", str(cfg), "--out", tmpdir])
            out = Path(tmpdir) / "denjoy"
            report = read_report(out / "report.json")
            self.assertEqual(code, 0 if report["pass"] else 1)
            self.assertTrue(report["checks"]["semiconjugacy"])
            self.assertTrue(report["checks"]["invariance"])
            self.assertTrue(report["checks"]["rotation_number"])
            self.assertEqual(report["map"]["depth"], 16)
            bands = pd.read_csv(out / "bands.csv")
            self.assertAlmostEqual(float(bands["weight"].sum()), 1.0, places=12)

    def test_realize_passes_and_is_deterministic(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            cfg = _write_config(Path(tmpdir), {**_SMALL, "realize": {"a": [0.3, 0.7]}})
            first, second = Path(tmpdir) / "a", Path(tmpdir) / "b"
            self.assertEqual(main(["realize", "--config", str(cfg), "--out", str(first)]), 0)
            self.assertEqual(main(["realize", "--config", str(cfg), "--out", str(second)]), 0)
            for name in ("report.json", "pairings.csv"):
                self.assertEqual((first / "realize" / name).read_bytes(), (second / "realize" / name).read_bytes())
            report = read_report(first / "realize" / "report.json")
            np.testing.assert_allclose(np.asarray(report["class"]) * report["scale"], [0.3, 0.7], atol=1e-3 * report["scale"])

    def test_leaf_limit_table(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            result = run_command("leaf-limit", RunCfg.from_config(_merged(_SMALL)), Path(tmpdir))
            table = pd.read_csv(Path(tmpdir) / "leaf-limit" / "leaf_limit.csv")
            self.assertEqual(table["R"].tolist(), [10, 1000])
            self.assertTrue(result.checks["limit"])

    def test_levelset_writes_pairings_and_contours(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            cfg = RunCfg.from_config(_merged({**_SMALL, "reports": {"format": "both"},
                                              "levelset": {"grid": 128, "cantor_depth": 3, "refinement": False},
                                              "forms": {"degree": 1, "torus_resolution": 128}}))
            result = run_command("levelset", cfg, Path(tmpdir))
            out = Path(tmpdir) / "levelset"
            self.assertTrue(result.checks["budget"])
            pairings = pd.read_csv(out / "pairings.csv")
            self.assertEqual(list(pairings.columns), ["entry", "flag", "sup", "direct", "solenoid", "lebesgue"])
            contours = pd.read_csv(out / "contours.csv")
            self.assertGreater(len(contours), 0)
            self.assertTrue((out / "pairings.mat").exists())
            doc = json.loads((out / "report.json").read_text(encoding="utf-8"))
            self.assertIn(doc["binding"], ("eq1", "eq2", "cantor"))

    def test_unknown_command_name(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            with self.assertRaisesRegex(ValueError, "unknown command"):
                run_command("teleport", RunCfg.from_config(_merged(_SMALL)), Path(tmpdir))

    def _twice(self, command: str, doc: dict, tables: tuple[str, ...]) -> dict:
        with tempfile.TemporaryDirectory() as tmpdir:
            cfg = _write_config(Path(tmpdir), doc)
            first, second = Path(tmpdir) / "a", Path(tmpdir) / "b"
            codes = [main([command, "--config", str(cfg), "--out", str(out)]) for out in (first, second)]
            self.assertEqual(codes[0], codes[1])
            self.assertIn(codes[0], (0, 1))
            for name in ("report.json",) + tuple(f"{t}.csv" for t in tables):
                self.assertEqual((first / command / name).read_bytes(), (second / command / name).read_bytes(), name)
            return read_report(first / command / "report.json")

    def test_leaf_limit_is_deterministic(self):
        report = self._twice("leaf-limit", _SMALL, ("leaf_limit",))
        self.assertEqual(report["command"], "leaf-limit")

    def test_levelset_is_deterministic(self):
        doc = {**_SMALL, "levelset": {"grid": 128, "cantor_depth": 3, "refinement": False},
               "forms": {"degree": 1, "torus_resolution": 128}}
        report = self._twice("levelset", doc, ("pairings", "contours"))
        self.assertIn(report["binding"], ("eq1", "eq2", "cantor"))

    def test_approximate_is_deterministic_across_threads(self):
        doc = {**_SMALL, "runtime": {"threads": 2},
               "approximate": {"max_refinements": 0, "degree": 1,
                               "beta": {"kind": "trig", "amplitude": 0.02, "factors": [["s", 1], ["s", 1]]}}}
        report = self._twice("approximate", doc, ("errors",))
        beta = beta_from_document(report["target"]["beta"])
        self.assertEqual(beta.coeffs, TrigPoly.monomial(2, (("s", 1), ("s", 1)), 0.02).coeffs)

    def test_numerical_breakdown_exits_with_failure(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            cfg = _write_config(Path(tmpdir), _SMALL)
            with mock.patch("solenoid_density.main.run_command", side_effect=RuntimeError("open contour at value 0.01")):
                with self.assertLogs("solenoid_density", level="ERROR") as logs:
                    code = main(["levelset", "--config", str(cfg), "--out", tmpdir])
            self.assertEqual(code, 1)
            self.assertIn("open contour", "\n".join(logs.output))


class ReportTests(unittest.TestCase):
    def test_floats_keep_seventeen_digits(self):
        doc = to_document({"x": 0.1, "v": np.array([1.0 / 3.0]), "ok": np.bool_(True), "n": np.int64(3)})
        self.assertEqual(doc["x"], "0.10000000000000001")
        self.assertEqual(float(doc["v"][0]), 1.0 / 3.0)
        self.assertIs(doc["ok"], True)
        self.assertEqual(doc["n"], 3)

    def test_mat_table_has_one_field_per_column(self):
        df = pd.DataFrame({"entry": ["dx", "dy"], "value": [0.5, -0.25]})
        with tempfile.TemporaryDirectory() as tmpdir:
            base = Path(tmpdir) / "t"
            write_table(df, base, "test", fmt="both", mat_variable="tab")
            self.assertTrue(base.with_suffix(".csv").exists())
            mat = loadmat(base.with_suffix(".mat"), squeeze_me=True, struct_as_record=False)
            np.testing.assert_allclose(mat["tab"].value, [0.5, -0.25])
            self.assertEqual(list(mat["tab"].entry), ["dx", "dy"])

    def test_denjoy_document_rebuilds_map_and_measure(self):
        schedule = GapSchedule({0: 0.2, -1: 0.05, 1: 0.05, 3: 0.1})
        h = build_denjoy(GOLDEN, schedule, 3)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "map.json"
            write_json({"map": denjoy_document(h)}, path, "map")
            doc = read_report(path)["map"]
        self.assertEqual(set(doc), {"rho", "depth", "schedule", "bands", "weights", "gaps", "cantor_length"})
        back = denjoy_from_document(doc)
        self.assertEqual(back.schedule.lengths, schedule.lengths)
        self.assertEqual(back.rho.value, h.rho.value)
        for name in ("indices", "positions", "left", "right", "successor"):
            np.testing.assert_array_equal(getattr(back, name), getattr(h, name))

        mu, mu_back = invariant_measure(h), measure_from_document(doc, back)
        self.assertEqual(mu_back.transversal.size, 4)
        np.testing.assert_array_equal(mu_back.transversal.lo, mu.transversal.lo)
        np.testing.assert_array_equal(mu_back.transversal.hi, mu.transversal.hi)
        np.testing.assert_array_equal(mu_back.weights, mu.weights)
        x = mu.transversal.lo + 0.3 * mu.transversal.widths
        np.testing.assert_array_equal(mu_back.cdf_lift(x), mu.cdf_lift(x))

    def test_beta_coefficient_table_round_trips(self):
        beta = TrigPoly.monomial(2, (("s", 1), ("c", 2)), 0.1) + TrigPoly.constant(2, 1.0 / 3.0)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "beta.json"
            write_json({"beta": beta_document(beta)}, path, "beta")
            back = beta_from_document(read_report(path)["beta"])
        self.assertEqual(back.n, 2)
        self.assertEqual(back.coeffs, beta.coeffs)


class FlagshipTests(unittest.TestCase):
    """The default `approximate` run, end to end."""

    def test_default_approximation_within_five_minutes(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            start = time.perf_counter()
            code = main(["approximate", "--out", tmpdir])
            elapsed = time.perf_counter() - start
            report = read_report(Path(tmpdir) / "approximate" / "report.json")
        self.assertLessEqual(elapsed, 300.0)
        self.assertEqual(code, 0, report["binding"])
        self.assertLessEqual(report["final_distance"], report["eps"])
        self.assertLessEqual(report["class_check"]["error"], 1e-3)
        self.assertTrue(report["ue_diagnostic"]["pass"])


if __name__ == "__main__":
    unittest.main()
