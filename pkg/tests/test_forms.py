import numpy as np
import unittest

from solenoid_density.core.forms import (
    Box, CurrentVector, KForm, Path, Segment, TrigPoly, build_dictionary, bump, derivative_sups,
    dictionary_size, exterior_derivative, gradient_defect, grid_cover, integrate_torus, line_integral,
    partition_of_unity, smooth_step, smooth_step_derivative, sup_norm, weak_distance, wedge,
)


def _points(m=200, n=2, seed=0):
    return np.random.default_rng(seed).random((m, n))


def _loop(y=0.3):
    """Horizontal closed loop at height y, split in two pieces."""
    return Path((Segment(np.array([0.0, y]), np.array([0.5, 0.0])),
                 Segment(np.array([0.5, y]), np.array([0.5, 0.0]))))


class TrigPolyTests(unittest.TestCase):
    def test_monomial_values(self):
        g = TrigPoly.monomial(2, [("s", 1), ("c", 2)], scale=0.5)
        pts = _points()
        want = 0.5 * np.sin(2 * np.pi * pts[:, 0]) * np.cos(4 * np.pi * pts[:, 1])
        np.testing.assert_allclose(g(pts), want, atol=1e-12)

    def test_gradient_matches_differences(self):
        g = TrigPoly.monomial(2, [("c", 1), ("s", 3)])
        self.assertLessEqual(gradient_defect(g, _points(50)), 1e-6)

    def test_sin_of_zero_frequency_vanishes(self):
        g = TrigPoly.monomial(2, [("s", 0), ("c", 1)])
        self.assertEqual(g.coeffs, {})

    def test_bad_factor_count(self):
        with self.assertRaises(ValueError):
            TrigPoly.monomial(2, [("s", 1)])


class BumpTests(unittest.TestCase):
    def test_plateau_and_support(self):
        b = bump(Box((0.2, 0.3), (0.5, 0.6)), 0.05)
        self.assertAlmostEqual(float(b(np.array([0.35, 0.45]))[0]), 1.0, places=12)
        self.assertEqual(float(b(np.array([0.8, 0.45]))[0]), 0.0)
        self.assertEqual(float(b(np.array([0.35, 0.66]))[0]), 0.0)
        self.assertLessEqual(gradient_defect(b, _points(100)), 1e-4)

    def test_smooth_step_is_flat_outside_the_unit_interval(self):
        u = np.array([-1.0, 0.0, 1.0, 2.0])
        np.testing.assert_array_equal(smooth_step(u), [0.0, 0.0, 1.0, 1.0])
        np.testing.assert_array_equal(smooth_step_derivative(u), 0.0)
        t = np.linspace(0.05, 0.95, 19)
        np.testing.assert_allclose(smooth_step(t) + smooth_step(1.0 - t), 1.0, atol=1e-15)
        h = 1e-6
        fd = (smooth_step(t + h) - smooth_step(t - h)) / (2 * h)
        np.testing.assert_allclose(smooth_step_derivative(t), fd, atol=1e-6)

    def test_margin_must_be_positive(self):
        with self.assertRaisesRegex(ValueError, "margin must be positive"):
            bump(Box((0.2, 0.2), (0.4, 0.4)), 0.0)

    def test_box_must_fit_a_chart(self):
        with self.assertRaisesRegex(ValueError, "chart"):
            bump(Box((0.0, 0.0), (0.95, 0.5)), 0.05)

    def test_partition_of_unity_sums_to_one(self):
        parts = partition_of_unity(grid_cover(2, 3), margin=0.05)
        pts = _points(300)
        np.testing.assert_allclose(sum(p(pts) for p in parts), 1.0, atol=1e-12)
        grad_sum = sum(p.grad(pts) for p in parts)
        self.assertLessEqual(float(np.max(np.abs(grad_sum))), 1e-9)

    def test_partition_needs_a_cover(self):
        with self.assertRaisesRegex(ValueError, "not a cover"):
            partition_of_unity([Box((0.0, 0.0), (0.5, 0.5))], margin=0.05)


class FormTests(unittest.TestCase):
    def test_d_squared_vanishes(self):
        g = KForm.function(TrigPoly.monomial(3, [("s", 1), ("c", 2), ("s", 1)]))
        ddg = exterior_derivative(exterior_derivative(g))
        self.assertLessEqual(sup_norm(ddg, 16), 1e-9)

    def test_wedge_is_antisymmetric_on_basis(self):
        dx, dy = KForm.basis(2, (0,)), KForm.basis(2, (1,))
        self.assertAlmostEqual(integrate_torus(wedge(dx, dy)), 1.0, places=12)
        self.assertAlmostEqual(integrate_torus(wedge(dy, dx)), -1.0, places=12)

    def test_exact_top_form_integrates_to_zero(self):
        prim = KForm.one_form([TrigPoly.monomial(2, [("c", 1), ("s", 2)]), TrigPoly.monomial(2, [("s", 1), ("c", 0)])])
        self.assertLessEqual(abs(integrate_torus(exterior_derivative(prim), 64)), 1e-12)

    def test_top_degree_cannot_be_differentiated(self):
        with self.assertRaisesRegex(ValueError, "top degree"):
            exterior_derivative(wedge(KForm.basis(2, (0,)), KForm.basis(2, (1,))))

    def test_closed_loop_pairs_with_basis_and_kills_exact(self):
        d = build_dictionary(2, 1, 2)
        loop = _loop()
        ix, iy = d.closed_basis()
        self.assertAlmostEqual(line_integral(loop, d.entries[ix].form), 1.0, places=12)
        self.assertAlmostEqual(line_integral(loop, d.entries[iy].form), 0.0, places=12)
        for i in d.indices("exact"):
            self.assertLessEqual(abs(line_integral(loop, d.entries[i].form)), 1e-10)

    def test_open_segment_matches_primitive_difference(self):
        g = TrigPoly.monomial(2, [("c", 1), ("s", 1)])
        dg = exterior_derivative(KForm.function(g))
        seg = Segment(np.array([0.1, 0.2]), np.array([0.3, 0.45]))
        want = float(g(seg.end)[0] - g(seg.start)[0])
        self.assertAlmostEqual(line_integral(seg, dg, 64), want, places=10)


class DictionaryTests(unittest.TestCase):
    def test_size_formula(self):
        for n, k, D in [(2, 1, 1), (2, 1, 2), (3, 1, 1), (3, 2, 1)]:
            self.assertEqual(len(build_dictionary(n, k, D)), dictionary_size(n, k, D))
        self.assertEqual(dictionary_size(2, 1, 1), 26)

    def test_flags_and_sups(self):
        d = build_dictionary(2, 1, 1)
        self.assertEqual(len(d.indices("closed")), 2)
        self.assertTrue(all(e.sup > 0.0 for e in d.entries))
        dsup = derivative_sups(d, 32)
        for i in d.indices("closed") + d.indices("exact"):
            self.assertEqual(dsup[i], 0.0)
        self.assertTrue(np.any(dsup[d.indices("general")] > 0.0))

    def test_unsupported_type(self):
        with self.assertRaisesRegex(ValueError, "unsupported form type"):
            build_dictionary(2, 3, 1)

    def test_current_vectors_need_the_same_dictionary(self):
        a = CurrentVector.zeros(build_dictionary(2, 1, 1))
        b = CurrentVector.zeros(build_dictionary(2, 1, 2))
        with self.assertRaisesRegex(ValueError, "dictionary mismatch"):
            weak_distance(a, b)

    def test_sum_adds_masses(self):
        d = build_dictionary(2, 1, 1)
        a = CurrentVector(np.ones(len(d)), d.key, 0.5)
        total = a + a.scaled(-2.0)
        self.assertAlmostEqual(total.mass, 1.5)
        np.testing.assert_allclose(total.pairings, -1.0)


if __name__ == "__main__":
    unittest.main()
