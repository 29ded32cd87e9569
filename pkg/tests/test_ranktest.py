import os
import unittest
import warnings

import numpy as np
from parameterized import parameterized
from scipy import stats

from paramcorr.errors import InapplicableApproximationError, SingularCovarianceError
from paramcorr.stats.ranktest import (
    RankTestInput,
    RankTestResult,
    compatibility_decision,
    compatibility_table,
    componentwise_ranks,
    mckeon_pvalue,
    permutation_pvalue,
    rank_scores,
    rank_test,
    statistic_LN,
)
from tests.utils import direct_LN, gen_catalog

RUN_SLOW = os.environ.get("PARAMCORR_RUN_SLOW") == "1"


def _gen_groups(seed, sizes=(40, 50), p=2, shift=0.0):
    rng = np.random.default_rng(seed)
    return [rng.normal(k * shift, 1.0, (n, p)) for k, n in enumerate(sizes)]


class TestRanks(unittest.TestCase):
    def test_untied_ranks(self):
        rm = componentwise_ranks(RankTestInput([[3.0], [1.0, 2.0]]))
        np.testing.assert_array_equal(rm.ranks, [[3.0, 1.0, 2.0]])
        self.assertEqual(rm.n_ties, [0])

    def test_mid_ranks(self):
        with self.assertWarns(UserWarning):
            rm = componentwise_ranks(RankTestInput([[5.0], [5.0]]))
        np.testing.assert_array_equal(rm.ranks, [[1.5, 1.5]])
        self.assertEqual(rm.n_ties, [1])

    def test_scores(self):
        np.testing.assert_array_equal(rank_scores([[1.0, 2.0, 3.0]]), [[0.25, 0.5, 0.75]])

    def test_input_validation(self):
        with self.assertRaises(ValueError):
            RankTestInput([[1.0, 2.0]])
        with self.assertRaises(ValueError):
            RankTestInput([[1.0], []])
        with self.assertRaises(ValueError):
            RankTestInput([np.ones((3, 2)), np.ones((3, 3))])


class TestStatistic(unittest.TestCase):
    def test_equal_mean_scores_give_zero(self):
        result = statistic_LN(RankTestInput([[1.0, 4.0], [2.0, 3.0]]))
        self.assertEqual(result.statistic, 0.0)
        np.testing.assert_array_equal(result.global_mean, [0.5])

    def test_small_groups_match_direct_formula(self):
        groups = [np.array([1.0, 3.0, 5.0]), np.array([2.0, 4.0, 6.0])]
        result = statistic_LN(RankTestInput(groups))
        # Scores 1/7..6/7: T = (9/21, 12/21), E = 1/2, V = 35/12 / 49
        expected = 3 * 2 * (1 / 14) ** 2 / (35 / 12 / 49)
        self.assertAlmostEqual(result.statistic, expected, places=12)
        self.assertAlmostEqual(result.statistic, direct_LN(groups), places=12)

    @parameterized.expand([(0, 2, (30, 30)), (1, 3, (20, 35, 25)), (2, 1, (15, 40)), (3, 4, (50, 60))])
    def test_matches_direct_formula(self, seed, p, sizes):
        rng = np.random.default_rng(seed)
        groups = [rng.normal(0.2 * k, 1.0, (n, p)) for k, n in enumerate(sizes)]
        got = statistic_LN(RankTestInput(groups)).statistic
        np.testing.assert_allclose(got, direct_LN(groups), rtol=1e-9)

    def test_random_small_instances_match_direct_formula(self):
        rng = np.random.default_rng(2024)
        n_checked = 0
        for _ in range(100):
            p = int(rng.integers(1, 4))
            c = int(rng.integers(2, 4))
            N = int(rng.integers(max(2 * c, p + 5), 21))
            sizes = 2 + rng.multinomial(N - 2 * c, np.full(c, 1 / c))
            groups = [rng.uniform(size=(n, p)) for n in sizes]
            try:
                got = statistic_LN(RankTestInput(groups)).statistic
            except SingularCovarianceError:
                continue
            np.testing.assert_allclose(got, direct_LN(groups), rtol=1e-10, atol=1e-13)
            n_checked += 1
        self.assertGreaterEqual(n_checked, 95)

    def test_group_order_invariance(self):
        groups = _gen_groups(5, sizes=(30, 45, 25), shift=0.3)
        a = statistic_LN(RankTestInput(groups)).statistic
        b = statistic_LN(RankTestInput(groups[::-1])).statistic
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_monotone_transform_invariance(self):
        groups = _gen_groups(6, shift=0.4)
        transformed = [np.column_stack([np.exp(g[:, 0]), g[:, 1] ** 3]) for g in groups]
        a = rank_test(RankTestInput(groups), method="mckeon_f")
        b = rank_test(RankTestInput(transformed), method="mckeon_f")
        self.assertEqual(a.statistic, b.statistic)
        self.assertEqual(a.p_value, b.p_value)

    def test_non_negative(self):
        for seed in range(10):
            self.assertGreaterEqual(statistic_LN(RankTestInput(_gen_groups(seed))).statistic, 0.0)

    def test_duplicated_variable_is_singular(self):
        x = np.random.default_rng(0).normal(size=(20, 1))
        y = np.random.default_rng(1).normal(size=(25, 1))
        inp = RankTestInput([np.hstack([x, x]), np.hstack([y, y])], variables=["mass", "mass_copy"])
        with self.assertRaises(SingularCovarianceError) as cm:
            statistic_LN(inp)
        self.assertEqual(sorted(cm.exception.variables), ["mass", "mass_copy"])

    def test_constant_variable_is_singular(self):
        groups = _gen_groups(2)
        for g in groups:
            g[:, 1] = 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            with self.assertRaises(SingularCovarianceError) as cm:
                statistic_LN(RankTestInput(groups, variables=["mass", "size"]))
        self.assertEqual(cm.exception.variables, ["size"])


class TestMcKeon(unittest.TestCase):
    def test_zero_statistic(self):
        p_value, _ = mckeon_pvalue(0.0, 2, 2, 40)
        self.assertEqual(p_value, 1.0)

    def test_parameters(self):
        _, params = mckeon_pvalue(1.0, 2, 2, 40)
        m_E, m_H, p = 38, 1, 2
        B = (m_E + m_H - p - 1) * (m_E - 1) / ((m_E - p - 3) * (m_E - p))
        b = 4 + (p * m_H + 2) / (B - 1)
        self.assertEqual(params["a"], 2)
        self.assertEqual(params["m_E"], 38)
        self.assertEqual(params["m_H"], 1)
        self.assertAlmostEqual(params["B"], 36 * 37 / (33 * 36), places=14)
        self.assertAlmostEqual(params["b"], b, places=12)
        self.assertAlmostEqual(params["scale_c"], 2 * (b - 2) / (b * 35), places=14)

    def test_decreasing_in_statistic(self):
        ps = [mckeon_pvalue(s, 2, 3, 100)[0] for s in (0.5, 1.0, 2.0, 5.0, 10.0)]
        self.assertEqual(ps, sorted(ps, reverse=True))

    def test_inapplicable(self):
        with self.assertRaises(InapplicableApproximationError):
            mckeon_pvalue(1.0, 2, 2, 6)

    def test_itself_is_compatible(self):
        x = np.random.default_rng(3).normal(size=(40, 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            result = rank_test(RankTestInput([x, x.copy()]))
        self.assertEqual(result.statistic, 0.0)
        self.assertEqual(result.p_value, 1.0)
        self.assertEqual(result.decision, "Accepted")

    def test_large_shift_rejected(self):
        result = rank_test(RankTestInput(_gen_groups(0, shift=3.0)))
        self.assertEqual(result.method, "mckeon_f")
        self.assertLess(result.p_value, 0.005)
        self.assertTrue(result.reject)


class TestPermutation(unittest.TestCase):
    def test_deterministic(self):
        inp = RankTestInput(_gen_groups(1, sizes=(15, 20), shift=0.3))
        a = permutation_pvalue(inp, n_perms=199, seed=42)
        b = permutation_pvalue(inp, n_perms=199, seed=42)
        self.assertEqual(a.p_value, b.p_value)
        self.assertEqual(a.method, "permutation")
        self.assertGreaterEqual(a.p_value, 1 / 200)
        self.assertLessEqual(a.p_value, 1.0)

    def test_large_shift(self):
        inp = RankTestInput(_gen_groups(2, sizes=(20, 20), shift=3.0))
        self.assertLessEqual(permutation_pvalue(inp, n_perms=199, seed=0).p_value, 0.01)

    def test_too_few_permutations(self):
        with self.assertRaises(ValueError):
            permutation_pvalue(RankTestInput(_gen_groups(0)), n_perms=50)

    def test_auto_falls_back_to_permutation(self):
        inp = RankTestInput(_gen_groups(3, sizes=(3, 4)))
        with self.assertWarns(UserWarning):
            result = rank_test(inp, method="auto", n_perms=99)
        self.assertEqual(result.method, "permutation")
        with self.assertRaises(InapplicableApproximationError):
            rank_test(inp, method="mckeon_f")

    @unittest.skipUnless(RUN_SLOW, "set PARAMCORR_RUN_SLOW=1 to run")
    def test_null_calibration(self):
        n_trials = 1000
        n_reject = 0
        for trial in range(n_trials):
            inp = RankTestInput(_gen_groups(1000 + trial, sizes=(30, 30, 30)))
            n_reject += permutation_pvalue(inp, n_perms=499, seed=trial).p_value < 0.05
        self.assertTrue(0.03 <= n_reject / n_trials <= 0.07)

    @unittest.skipUnless(RUN_SLOW, "set PARAMCORR_RUN_SLOW=1 to run")
    def test_agrees_with_mckeon(self):
        for seed, shift in [(7, 0.0), (8, 0.0), (9, 0.1), (10, 0.1), (11, 0.2), (12, 0.25)]:
            inp = RankTestInput(_gen_groups(seed, sizes=(30, 30, 30), shift=shift))
            p_perm = permutation_pvalue(inp, n_perms=9999, seed=seed).p_value
            p_f = rank_test(inp, method="mckeon_f").p_value
            self.assertLess(abs(p_perm - p_f), 0.03, msg=f"seed={seed}, shift={shift}")


class TestCompatibility(unittest.TestCase):
    @parameterized.expand([("accept", 0.096, "Accepted"), ("reject", 0.0, "Rejected"), ("boundary", 0.005, "Accepted")])
    def test_decision(self, _, p_value, decision):
        result = compatibility_decision(RankTestResult(statistic=1.0, p_value=p_value), alpha=0.005)
        self.assertEqual(result.decision, decision)
        self.assertEqual(result.alpha, 0.005)

    def test_decision_needs_p_value(self):
        with self.assertRaises(ValueError):
            compatibility_decision(RankTestResult(statistic=1.0))

    def test_reference_design(self):
        catalogs = [gen_catalog(60, seed, label=f"dataset-{seed}") for seed in range(7)]
        table = compatibility_table(catalogs, reference="dataset-3")
        self.assertEqual(len(table), 6)
        self.assertTrue((table["sample1"] == "dataset-3").all())
        self.assertNotIn("dataset-3", set(table["sample2"]))
        self.assertTrue(set(table["decision"]) <= {"Accepted", "Rejected"})
        self.assertEqual(
            list(table.columns),
            ["sample1", "sample2", "p_value", "decision", "statistic", "method", "alpha"],
        )

    def test_pairwise_design(self):
        catalogs = [gen_catalog(40, seed, label=f"c{seed}") for seed in range(4)]
        table = compatibility_table(catalogs, design="pairwise")
        self.assertEqual(len(table), 6)

    def test_shifted_catalog_rejected(self):
        reference = gen_catalog(80, 0, label="reference")
        shifted = gen_catalog(80, 1, label="shifted", mass_range=(11.0, 12.5))
        table = compatibility_table([reference, shifted])
        self.assertEqual(table.loc[0, "decision"], "Rejected")

    def test_unique_labels(self):
        c = gen_catalog(30, 0, label="same")
        with self.assertRaises(ValueError):
            compatibility_table([c, gen_catalog(30, 1, label="same")])

    def test_unknown_reference(self):
        with self.assertRaises(ValueError):
            compatibility_table([gen_catalog(30, 0, label="a"), gen_catalog(30, 1, label="b")], reference="c")


if __name__ == "__main__":
    unittest.main()
