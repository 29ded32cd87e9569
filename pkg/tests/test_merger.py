import math
import unittest

from hypothesis import given, settings
from hypothesis import strategies as st
from parameterized import parameterized

from paramcorr.errors import NoSolutionError
from paramcorr.merger import MergerParams, invert_for_eta, merger_ratios


class TestMergerRatios(unittest.TestCase):
    @parameterized.expand(
        [
            ("equal_mass_same_speed", 1.0, 1.0, (1.0, 2.0, 0.25)),
            ("cold_accretion", 1.0, 0.0, (0.5, 4.0, 1 / 32)),
            ("no_accretion", 0.0, 3.7, (1.0, 1.0, 1.0)),
        ]
    )
    def test_ratios(self, _, eta, epsilon, expected):
        ratios = merger_ratios(MergerParams(eta, epsilon))
        for got, want in zip((ratios.v2_ratio, ratios.size_ratio, ratios.density_ratio), expected):
            self.assertAlmostEqual(got, want, places=14)

    @given(
        eta=st.floats(min_value=0.0, max_value=100.0),
        epsilon=st.floats(min_value=0.0, max_value=10.0),
    )
    def test_virial_identities(self, eta, epsilon):
        r = merger_ratios(MergerParams(eta, epsilon))
        self.assertTrue(math.isclose(r.density_ratio * r.size_ratio**3, 1 + eta, rel_tol=1e-12))
        self.assertTrue(math.isclose(r.v2_ratio * r.size_ratio, 1 + eta, rel_tol=1e-12))
        self.assertGreater(r.size_ratio, 0)

    def test_size_grows_with_eta_below_unit_epsilon(self):
        sizes = [merger_ratios(MergerParams(eta, 0.5)).size_ratio for eta in (0.0, 0.1, 0.5, 1.0, 5.0)]
        self.assertEqual(sizes, sorted(sizes))
        self.assertEqual(len(set(sizes)), len(sizes))

    @parameterized.expand([(-1.0, 1.0), (1.0, -0.5), (float("nan"), 1.0), (1.0, float("inf"))])
    def test_invalid_params(self, eta, epsilon):
        with self.assertRaises(ValueError):
            MergerParams(eta, epsilon)


class TestInvertForEta(unittest.TestCase):
    @parameterized.expand(
        [
            ("cold_accretion", 4.0, 0.0, 1.0),
            ("equal_mass", 2.0, 1.0, 1.0),
            ("identity", 1.0, 0.3, 0.0),
        ]
    )
    def test_examples(self, _, target, epsilon, eta):
        self.assertAlmostEqual(invert_for_eta(target, epsilon), eta, places=14)

    @settings(max_examples=200)
    @given(
        eta=st.floats(min_value=0.05, max_value=10.0),
        epsilon=st.floats(min_value=0.0, max_value=0.99),
    )
    def test_round_trip(self, eta, epsilon):
        target = merger_ratios(MergerParams(eta, epsilon)).size_ratio
        self.assertTrue(math.isclose(invert_for_eta(target, epsilon), eta, rel_tol=1e-10))

    def test_no_solution(self):
        # Both roots negative
        with self.assertRaises(NoSolutionError):
            invert_for_eta(0.5, 1.0)
        # Complex roots
        with self.assertRaises(NoSolutionError):
            invert_for_eta(0.9, 2.0)

    @parameterized.expand([(0.0, 1.0), (-2.0, 1.0), (2.0, -1.0)])
    def test_invalid_input(self, target, epsilon):
        with self.assertRaises(ValueError):
            invert_for_eta(target, epsilon)


if __name__ == "__main__":
    unittest.main()
