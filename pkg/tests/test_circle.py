import numpy as np
import unittest

from solenoid_density.core.circle import (
    GOLDEN, GapSchedule, HolonomySystem, IdentityMap, RigidRotation, RotationNumber, TransversalMeasure,
    band_indicators, birkhoff_averages, birkhoff_spread, build_denjoy, compose_holonomy, denjoy_system,
    invariance_defect, invariant_measure, partition_by_mass, partition_residual, pushforward_defect,
    reduced_map, rotation_number_estimate, sample_starts, semiconjugacy_defect, transport_map, uniform_transversal,
    window,
)


def _golden(depth=64):
    return build_denjoy(GOLDEN, GapSchedule.default(), depth)


class RotationNumberTests(unittest.TestCase):
    def test_rational_value_is_rejected(self):
        with self.assertRaisesRegex(ValueError, "rational rotation number"):
            RotationNumber.from_value(0.4)

    def test_value_outside_unit_interval_is_rejected(self):
        with self.assertRaisesRegex(ValueError, "must lie in"):
            RotationNumber.from_value(1.25)

    def test_golden_convergents_are_fibonacci_ratios(self):
        conv = RotationNumber.from_value(GOLDEN).convergents
        self.assertEqual((conv[4].numerator, conv[4].denominator), (3, 5))


class GapScheduleTests(unittest.TestCase):
    def test_gaps_longer_than_circle_are_rejected(self):
        with self.assertRaisesRegex(ValueError, "gaps exhaust circle"):
            GapSchedule({0: 0.6, 1: 0.5})

    def test_default_schedule_is_summable_with_ratio_to_one(self):
        s = GapSchedule.default(range_n=128, total=0.5)
        self.assertAlmostEqual(s.total, 0.5, places=12)
        self.assertTrue(s.ratio_condition())

    def test_depth_beyond_schedule_is_rejected(self):
        with self.assertRaises(ValueError):
            build_denjoy(GOLDEN, GapSchedule.default(range_n=16), depth=32)


class DenjoyMapTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.h = _golden()

    def test_rotation_number_estimate(self):
        est = rotation_number_estimate(self.h, 100_000)
        self.assertLessEqual(abs(est - GOLDEN), 1e-4)

    def test_semiconjugacy_at_gap_endpoints(self):
        self.assertLessEqual(semiconjugacy_defect(self.h), 1e-12)

    def test_lift_is_monotone_degree_one(self):
        x = np.linspace(0.0, 1.0, 20001)
        y = self.h.lift(x)
        self.assertTrue(np.all(np.diff(y) >= -1e-15))
        self.assertAlmostEqual(float(y[-1] - y[0]), 1.0, places=12)

    def test_gap_goes_to_next_gap(self):
        a, b = self.h.gap(3)
        c, d = self.h.gap(4)
        img = np.mod(self.h.lift(np.array([a, 0.5 * (a + b), b])), 1.0)
        np.testing.assert_allclose(img, [c, 0.5 * (c + d), d], atol=1e-12)

    def test_inverse_undoes_the_map_on_cantor_points(self):
        x = self.h.blowup(np.linspace(0.01, 0.99, 97))
        np.testing.assert_allclose(self.h.inverse_lift(self.h.lift(x)), x, atol=1e-12)

    def test_scalar_and_vector_steps_agree(self):
        x = np.array([0.0, 0.123, 0.5, self.h.gap(-7)[0], 0.999])
        vec = self.h.lift(x)
        for xi, yi in zip(x, vec):
            self.assertAlmostEqual(self.h.iterate_lift(float(xi), 1), float(yi), places=12)

    def test_orbit_matches_iteration(self):
        x = self.h.blowup(np.array([0.2, 0.7]))
        orb = self.h.orbit(x, np.arange(6))
        cur = x.copy()
        for j in range(6):
            np.testing.assert_allclose(orb[:, j], cur, atol=1e-12)
            cur = self.h(cur)


class MeasureTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.h = _golden()
        cls.system = denjoy_system(cls.h)

    def test_invariance_on_band_generators(self):
        self.assertLessEqual(invariance_defect(self.system), 1e-12)

    def test_measure_is_a_probability(self):
        self.assertAlmostEqual(self.system.measure.total, 1.0, places=12)

    def test_cdf_inverts_quantile(self):
        m = self.system.measure
        c = np.linspace(0.0, 0.999, 37)
        np.testing.assert_allclose(m.cdf_lift(m.quantile_lift(c)) - m.cdf_lift(m.transversal.lo[0]), c, atol=1e-10)

    def test_birkhoff_spread_is_small_and_shrinks(self):
        obs = band_indicators(self.system.transversal, 5)
        starts = sample_starts(self.system, 20)
        short = birkhoff_spread(self.system, obs, starts, 2_000)
        long = birkhoff_spread(self.system, obs, starts, 20_000)
        self.assertLessEqual(long, 0.01)
        self.assertLess(long, short)

    def test_birkhoff_average_of_indicator_is_its_mass(self):
        obs = band_indicators(self.system.transversal, 4)
        starts = sample_starts(self.system, 3)
        avg = birkhoff_averages(self.system, obs, starts, 20_000)
        masses = [self.system.measure.set_mass(f.bands) for f in obs]
        np.testing.assert_allclose(avg.mean(axis=1), masses, atol=5e-3)

    def test_start_in_a_gap_is_rejected(self):
        a, b = self.h.gap(0)
        with self.assertRaisesRegex(ValueError, "point not on transversal"):
            birkhoff_averages(self.system, band_indicators(self.system.transversal, 2), 0.5 * (a + b), 10)


class PartitionAndTransportTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.h = _golden(depth=32)
        cls.mu = invariant_measure(cls.h, 32)

    def test_exact_partition_hits_masses(self):
        lam = [0.3, 0.7]
        pieces = partition_by_mass(self.mu, lam, exact=True)
        self.assertLessEqual(partition_residual(self.mu, pieces, lam), 1e-12)

    def test_band_partition_is_close(self):
        lam = [0.25, 0.25, 0.5]
        pieces = partition_by_mass(self.mu, lam)
        self.assertEqual(len(pieces), 3)
        self.assertLessEqual(partition_residual(self.mu, pieces, lam), 0.05)

    def test_partition_argument_errors(self):
        with self.assertRaisesRegex(ValueError, "do not sum to 1"):
            partition_by_mass(self.mu, [0.5, 0.6])
        with self.assertRaisesRegex(ValueError, "masses must be positive"):
            partition_by_mass(self.mu, [1.5, -0.5])
        with self.assertRaises(ValueError):
            partition_by_mass(self.mu, [0.5, 0.5], r=3)

    def test_window_holds_requested_mass(self):
        piece = window(self.mu, 0.1, 0.35)
        self.assertLessEqual(abs(self.mu.restrict(piece).total - 0.25), 1e-10)
        with self.assertRaises(ValueError):
            window(self.mu, 0.5, 1.5)

    def test_transport_pushes_measure_forward(self):
        source = self.mu.restrict(window(self.mu, 0.2, 0.5))
        tv = uniform_transversal(16)
        target = TransversalMeasure(tv, np.full(16, source.total / 16))
        phi = transport_map(source, target)
        self.assertLessEqual(pushforward_defect(phi), 1e-12)

    def test_transport_mass_mismatch(self):
        tv = uniform_transversal(4)
        with self.assertRaisesRegex(ValueError, "mass mismatch"):
            transport_map(self.mu, TransversalMeasure(tv, np.full(4, 0.5)))

    def test_composition_with_trivial_guest_keeps_host_dynamics(self):
        system = denjoy_system(self.h, 32)
        source = self.mu.restrict(window(self.mu, 0.0, 0.2))
        tv = uniform_transversal(8)
        guest_m = TransversalMeasure(tv, np.full(8, source.total / 8))
        guest = HolonomySystem(tv, IdentityMap(), guest_m)
        composed = compose_holonomy(system, guest, transport_map(source, guest_m))
        x = sample_starts(system, 50)
        np.testing.assert_allclose(np.mod(composed.map.lift(x), 1.0), self.h(x), atol=1e-9)

    def test_birkhoff_on_glued_system_uses_host_orbit(self):
        system = denjoy_system(self.h, 32)
        composed = system
        for c0 in (0.0, 0.3):
            source = self.mu.restrict(window(self.mu, c0, c0 + 0.2))
            tv = uniform_transversal(8)
            guest_m = TransversalMeasure(tv, np.full(8, source.total / 8))
            composed = compose_holonomy(composed, HolonomySystem(tv, IdentityMap(), guest_m),
                                        transport_map(source, guest_m))
        self.assertIs(reduced_map(composed.map), self.h)
        self.assertIs(reduced_map(self.h), self.h)

        observables = band_indicators(composed.transversal, 5)
        starts = sample_starts(composed, 20)
        fast = birkhoff_averages(composed, observables, starts, 200)
        stepped = np.zeros_like(fast)
        x = starts.copy()
        for _ in range(200):
            for i, f in enumerate(observables):
                stepped[i] += f(x)
            x = composed.map(x)
        np.testing.assert_allclose(fast, stepped / 200, atol=1e-12)

    def test_nontrivial_patch_is_kept(self):
        system = denjoy_system(self.h, 32)
        source = self.mu.restrict(window(self.mu, 0.0, 0.2))
        tv = uniform_transversal(8)
        guest_m = TransversalMeasure(tv, np.full(8, source.total / 8))
        guest = HolonomySystem(tv, RigidRotation(0.25), guest_m)
        composed = compose_holonomy(system, guest, transport_map(source, guest_m))
        self.assertIs(reduced_map(composed.map), composed.map)

    def test_composition_domain_mismatch(self):
        system = denjoy_system(self.h, 32)
        source = self.mu.restrict(window(self.mu, 0.0, 0.2))
        tv = uniform_transversal(8)
        guest_m = TransversalMeasure(tv, np.full(8, source.total / 8))
        other = HolonomySystem(uniform_transversal(4), RigidRotation(0.1),
                               TransversalMeasure(uniform_transversal(4), np.full(4, 0.25)))
        with self.assertRaisesRegex(ValueError, "domain mismatch"):
            compose_holonomy(system, other, transport_map(source, guest_m))


if __name__ == "__main__":
    unittest.main()
