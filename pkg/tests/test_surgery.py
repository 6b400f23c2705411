import numpy as np
import unittest

from solenoid_density.core.circle import window
from solenoid_density.core.config import DenjoyCfg, FieldCfg, RunCfg, SolenoidCfg, load_config
from solenoid_density.core.forms import CurrentVector, TrigPoly, build_dictionary, grid_cover
from solenoid_density.core.levelset import (ContourSegments, LevelSetSolenoid, ValueWeights, cantor_weights,
                                            exclusion_set, levelset_solenoid, radial_bump, zero_field)
from solenoid_density.core.solenoid import realize_class
from solenoid_density.core.surgery import (
    TargetCurrent, approximate_current, build_beta, chunk, decompose_exact, levelset_handle, plan_surgery,
    reconstruction_defect, suspension_handle, surgery,
)


def _flat_solenoid(count=10, weight=0.1):
    """Cantor-weighted level-set solenoid whose levels carry no curves."""
    empty = ContourSegments(0.0, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, np.int64), np.zeros(0, np.int64))
    values = np.linspace(0.1, 0.9, count)
    bands = np.stack([values - 0.01, values + 0.01], axis=1)
    w = ValueWeights(values, np.full(count, weight), "cantor", bands)
    return LevelSetSolenoid(zero_field(), w, (empty,) * count)


def _radial_solenoid(grid=64):
    bundle = radial_bump((0.6, 0.4), 0.2, 0.2)
    region = exclusion_set(bundle, 1e-3, grid)
    return levelset_solenoid(bundle, region, cantor_weights(region.regular_intervals(), 2e-2, depth=3), grid)


def _small_run_cfg(**approximate) -> RunCfg:
    raw = load_config()
    raw["denjoy"].update({"schedule_range": 64, "depth": 16})
    raw["diagnostics"].update({"birkhoff_iterations": 2000, "birkhoff_starts": 8, "observables": 4})
    raw["forms"].update({"torus_resolution": 64, "curve_resolution": 16})
    raw["levelset"].update({"grid": 64, "cantor_depth": 3, "epsilon": 1e-2, "epsilon_measure": 1e-2})
    raw["approximate"].update({"max_refinements": 0, "degree": 1, **approximate})
    raw["runtime"]["threads"] = 2
    return RunCfg.from_config(raw)


class ChunkTests(unittest.TestCase):
    def test_unit_mass_in_pieces_of_three_tenths(self):
        pieces = chunk(_flat_solenoid(), 0.3)
        self.assertEqual(len(pieces), 4)
        masses = [p.transversal_mass for p in pieces]
        self.assertAlmostEqual(sum(masses), 1.0, places=12)
        self.assertTrue(all(m <= 0.3 + 1e-12 for m in masses))

    def test_atoms_are_split_when_needed(self):
        pieces = chunk(_flat_solenoid(3, 0.5), 0.4)
        self.assertEqual(len(pieces), 4)
        self.assertAlmostEqual(sum(p.transversal_mass for p in pieces), 1.5, places=12)

    def test_small_solenoid_is_one_chunk(self):
        ls = _flat_solenoid()
        self.assertEqual(chunk(ls, 2.0), [ls])

    def test_chunk_currents_add_up(self):
        ls = _radial_solenoid()
        d = build_dictionary(2, 1, 1)
        pieces = chunk(ls, ls.transversal_mass / 3.5)
        self.assertEqual(len(pieces), 4)
        total = CurrentVector.zeros(d)
        for p in pieces:
            total = total + p.current(d)
        np.testing.assert_allclose(total.pairings, ls.current(d).pairings, atol=1e-12)
        self.assertAlmostEqual(total.mass, ls.mass(), places=12)

    def test_chunk_arguments(self):
        with self.assertRaisesRegex(ValueError, "cannot chunk"):
            chunk(object(), 1.0)
        with self.assertRaisesRegex(ValueError, "mass_bound must be positive"):
            chunk(_flat_solenoid(), 0.0)


class ExactPartTests(unittest.TestCase):
    def test_pieces_reconstruct_d_beta(self):
        d = build_dictionary(2, 1, 1)
        beta = build_beta(FieldCfg(kind="trig", amplitude=0.1, factors=(("s", 1), ("c", 1))))
        target = TargetCurrent(np.array([0.3, 0.7]), beta, d)
        fields = decompose_exact(beta, grid_cover(2, 2), 0.05)
        self.assertEqual(len(fields), 4)
        self.assertLessEqual(reconstruction_defect(target, fields, 64), 1e-10)

    def test_zero_beta_gives_zero_fields(self):
        beta = build_beta(FieldCfg(kind="zero"))
        fields = decompose_exact(beta, grid_cover(2, 2), 0.05)
        self.assertTrue(all(f.support is None for f in fields))
        target = TargetCurrent(np.array([1.0, 0.0]), beta, build_dictionary(2, 1, 1))
        np.testing.assert_array_equal(target.exact_part(32).pairings, 0.0)


class SurgeryTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.d = build_dictionary(2, 1, 1)
        sol = realize_class((0.3, 0.7), DenjoyCfg(schedule_range=64, depth=16), SolenoidCfg(), resolution=16)
        cls.host = suspension_handle(sol, cls.d, 16)
        ls = _radial_solenoid()
        cls.guest_ls = chunk(ls, 0.5 * cls.host.mass)[0]
        cls.guest = levelset_handle(cls.guest_ls, cls.d, label="g")

    def _plan(self, eps_tube):
        site = window(self.host.system.measure, 0.0, self.guest.mass)
        return plan_surgery(self.host, self.guest, site, eps_tube)

    def test_current_is_additive_up_to_the_bound(self):
        handle, current, bound = surgery(self._plan(0.01), self.d, 16)
        naive = self.host.current.pairings + self.guest.current.pairings
        self.assertTrue(np.all(np.abs(current.pairings - naive) <= bound + 1e-12))
        self.assertAlmostEqual(handle.mass, self.host.mass + self.guest.mass, places=12)
        self.assertEqual(handle.label, "S_a+g")

    def test_bound_is_linear_in_tube_width(self):
        _, _, b1 = surgery(self._plan(0.01), self.d, 16)
        _, _, b2 = surgery(self._plan(0.02), self.d, 16)
        np.testing.assert_allclose(b2, 2.0 * b1, rtol=1e-12)

    def test_glued_holonomy_keeps_the_measure(self):
        handle, _, _ = surgery(self._plan(0.01), self.d, 16)
        self.assertIs(handle.system.measure, self.host.system.measure)
        site = window(self.host.system.measure, 0.0, self.guest.mass)
        x = self.host.system.transversal.midpoints()
        hx = self.host.system.map.lift(x)
        away = ~site.contains(np.mod(hx, 1.0))
        self.assertTrue(np.any(away))
        np.testing.assert_allclose(handle.system.map.lift(x)[away], hx[away], atol=1e-14)

    def test_massless_guest_changes_nothing(self):
        empty = _flat_solenoid(2, 0.0)
        guest = levelset_handle(empty, self.d)
        plan = plan_surgery(self.host, guest, None, 0.01)
        self.assertIsNone(plan.phi)
        handle, current, bound = surgery(plan, self.d, 16)
        self.assertIs(handle, self.host)
        np.testing.assert_array_equal(bound, 0.0)

    def test_tube_width_must_be_positive(self):
        with self.assertRaisesRegex(ValueError, "eps_tube must be positive"):
            self._plan(0.0)


class ApproximateTests(unittest.TestCase):
    def test_small_run_reports_every_stage(self):
        cfg = _small_run_cfg()
        ap = cfg.approximate
        d = build_dictionary(2, 1, ap.degree)
        beta = TrigPoly.monomial(2, (("s", 1), ("s", 1)), 0.02)
        handle, vec, report = approximate_current(TargetCurrent(np.asarray(ap.a), beta, d), ap.eps, cfg)
        self.assertEqual(len(report["pieces"]), 4)
        self.assertEqual(len(report["distances"]), report["surgeries"] + 1)
        self.assertGreater(report["surgeries"], 0)
        self.assertTrue(report["class_check"]["pass"])
        self.assertEqual(set(report["checks"]), {"certificates", "tube", "class", "unique_ergodicity", "distance"})
        self.assertTrue(report["checks"]["tube"])
        self.assertEqual(report["pass"], all(report["checks"].values()))
        self.assertEqual(vec.pairings.shape, (len(d),))

    def test_eps_must_be_positive(self):
        cfg = _small_run_cfg()
        d = build_dictionary(2, 1, 1)
        with self.assertRaisesRegex(ValueError, "eps must be positive"):
            approximate_current(TargetCurrent(np.array([0.3, 0.7]), TrigPoly(2, {}), d), 0.0, cfg)


if __name__ == "__main__":
    unittest.main()
