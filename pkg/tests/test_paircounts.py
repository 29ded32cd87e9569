import math
import os
import time
import unittest

import numba
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from parameterized import parameterized

from paramcorr.correlation.paircounts import (
    BinGrid,
    PairCountHistogram,
    SeparationScale,
    cross_pair_counts,
    cross_pair_counts_accelerated,
    max_separation,
    normalize_counts,
    pair_counts,
    total_pairs,
    union_separation,
)
from paramcorr.data.transform import PointSet
from paramcorr.errors import (
    AlreadyNormalizedError,
    BinGridMismatchError,
    EmptyPointSetError,
    SeparationOverflowError,
)
from tests.utils import brute_force_counts, gen_point_set

RUN_SLOW = os.environ.get("PARAMCORR_RUN_SLOW") == "1"


def _ps(points, label="p"):
    return PointSet(np.asarray(points, dtype=float), {"label": label})


coordinates = arrays(
    np.float64,
    st.tuples(st.integers(1, 25), st.just(2)),
    elements=st.floats(-100, 100, allow_nan=False, allow_infinity=False),
)


class TestBinGrid(unittest.TestCase):
    def test_edges(self):
        grid = BinGrid(4)
        np.testing.assert_array_equal(grid.edges, [0.0, 0.25, 0.5, 0.75, 1.0])
        np.testing.assert_array_equal(grid.centers, [0.125, 0.375, 0.625, 0.875])
        self.assertFalse(grid.edges.flags.writeable)
        self.assertEqual(grid, BinGrid(4))
        self.assertNotEqual(grid, BinGrid(5))

    def test_invalid(self):
        with self.assertRaises(ValueError):
            BinGrid(0)

    @parameterized.expand([(0.0,), (-1.0,), (float("nan"),), (float("inf"),)])
    def test_invalid_scale(self, r_max):
        with self.assertRaises(ValueError):
            SeparationScale(r_max)


class TestMaxSeparation(unittest.TestCase):
    def test_three_four_five(self):
        self.assertEqual(max_separation(_ps([[0, 0]]), _ps([[3, 4]])).r_max, 5.0)

    def test_two_points(self):
        a = _ps([[0, 0], [1, 0]])
        scale = max_separation(a, a)
        self.assertEqual(scale.r_max, 1.0)
        self.assertEqual(scale.source, "data-data")

    def test_matches_enumeration(self):
        a, b = gen_point_set(50, 0), gen_point_set(50, 1)
        d = np.sqrt(((a.points[:, None, :] - b.points[None, :, :]) ** 2).sum(axis=2))
        self.assertAlmostEqual(max_separation(a, b).r_max, d.max(), places=14)

    def test_coincident_points(self):
        a = _ps([[1, 1], [1, 1]])
        with self.assertRaises(ValueError):
            max_separation(a, a)

    def test_union_covers_every_pair_kind(self):
        da, db = gen_point_set(30, 0), gen_point_set(30, 1)
        r1 = [gen_point_set(30, 2), _ps([[5.0, 5.0]], "far")]
        r2 = gen_point_set(30, 3)
        union = union_separation(da, db, r1, r2)
        self.assertEqual(union.source, "union")
        for x, y in [(da, db), (da, r2), (db, r1[0]), (db, r1[1]), (r1[0], r2), (r1[1], r2)]:
            self.assertGreaterEqual(union.r_max, max_separation(x, y).r_max)

    def test_empty(self):
        with self.assertRaises(EmptyPointSetError):
            max_separation(_ps(np.empty((0, 2))), _ps([[0, 0]]))


class TestCrossPairCounts(unittest.TestCase):
    @parameterized.expand([("naive",), ("accelerated",)])
    def test_single_pair_at_r_max(self, kernel):
        h = pair_counts(_ps([[0, 0]], "a"), _ps([[1, 0]], "b"), BinGrid(10), SeparationScale(1.0), kernel=kernel)
        np.testing.assert_array_equal(h.counts, [0] * 9 + [1])
        self.assertEqual(h.total_pairs, 1)

    @parameterized.expand([("naive",), ("accelerated",)])
    def test_coincident_pair(self, kernel):
        h = pair_counts(_ps([[0, 0]], "a"), _ps([[0, 0]], "b"), BinGrid(10), SeparationScale(1.0), kernel=kernel)
        np.testing.assert_array_equal(h.counts, [1] + [0] * 9)

    @parameterized.expand([("naive",), ("accelerated",)])
    def test_equal_but_distinct_sets_keep_self_pairs(self, kernel):
        a, b = PointSet([[0.0, 0.0]], {}), PointSet([[0.0, 0.0]], {})
        self.assertEqual(a, b)
        h = pair_counts(a, b, BinGrid(10), SeparationScale(1.0), kernel=kernel)
        np.testing.assert_array_equal(h.counts, [1] + [0] * 9)
        self.assertEqual(h.total_pairs, 1)

    @parameterized.expand([("naive",), ("accelerated",)])
    def test_copy_is_cross_paired(self, kernel):
        a = gen_point_set(30, 4)
        copy = PointSet(a.points, a.provenance, a.axis_names)
        scale = max_separation(a, a)
        cross = pair_counts(a, copy, BinGrid(6), scale, kernel=kernel)
        auto = pair_counts(a, a, BinGrid(6), scale, kernel=kernel)
        self.assertEqual(cross.total_pairs, 900)
        self.assertEqual(cross.counts.sum(), 900)
        self.assertEqual(auto.total_pairs, 435)
        # Every unordered pair is seen twice plus the 30 coincident self-pairs
        np.testing.assert_array_equal(cross.counts, 2 * auto.counts + np.eye(6, dtype=np.int64)[0] * 30)

    def test_matches_brute_force(self):
        a, b = gen_point_set(20, 0), gen_point_set(30, 1)
        scale = max_separation(a, b)
        h = cross_pair_counts(a, b, BinGrid(10), scale)
        np.testing.assert_array_equal(h.counts, brute_force_counts(a.points, b.points, 10, scale.r_max))
        self.assertEqual(h.counts.sum(), 600)

    @parameterized.expand([("uniform",), ("lattice",)])
    def test_self_pairs(self, kind):
        a = gen_point_set(40, 2, kind=kind)
        scale = max_separation(a, a)
        h = cross_pair_counts(a, a, BinGrid(7), scale)
        self.assertEqual(h.total_pairs, 40 * 39 // 2)
        self.assertEqual(h.counts.sum(), h.total_pairs)
        np.testing.assert_array_equal(
            h.counts, brute_force_counts(a.points, a.points, 7, scale.r_max, same=True)
        )

    def test_half_open_bins(self):
        # Separations 0.5 and 0.25 fall on edges and go to the upper bin
        a = _ps([[0, 0]], "a")
        b = _ps([[0.5, 0], [0.25, 0], [1.0, 0]], "b")
        h = cross_pair_counts(a, b, BinGrid(4), SeparationScale(1.0))
        np.testing.assert_array_equal(h.counts, [0, 1, 1, 1])

    def test_overflow(self):
        a, b = _ps([[0, 0]], "a"), _ps([[3, 4]], "b")
        for fn in (cross_pair_counts, cross_pair_counts_accelerated):
            with self.assertRaises(SeparationOverflowError):
                fn(a, b, BinGrid(5), SeparationScale(4.9))

    def test_empty(self):
        for fn in (cross_pair_counts, cross_pair_counts_accelerated):
            with self.assertRaises(EmptyPointSetError):
                fn(_ps(np.empty((0, 2))), _ps([[0, 0]]), BinGrid(5), SeparationScale(1.0))

    @settings(max_examples=50, deadline=None)
    @given(a=coordinates, b=coordinates)
    def test_symmetry(self, a, b):
        a, b = _ps(a, "a"), _ps(b, "b")
        scale = SeparationScale(1e3)
        ab = cross_pair_counts(a, b, BinGrid(8), scale)
        ba = cross_pair_counts(b, a, BinGrid(8), scale)
        np.testing.assert_array_equal(ab.counts, ba.counts)
        self.assertEqual(ab.counts.sum(), len(a) * len(b))

    @parameterized.expand([(0.25,), (2.0,), (8.0,)])
    def test_scale_invariance(self, lam):
        a, b = gen_point_set(60, 3), gen_point_set(45, 4)
        scale = max_separation(a, b)
        h = cross_pair_counts(a, b, BinGrid(10), scale)
        scaled = cross_pair_counts(
            _ps(lam * a.points, "a"), _ps(lam * b.points, "b"), BinGrid(10), SeparationScale(lam * scale.r_max)
        )
        np.testing.assert_array_equal(h.counts, scaled.counts)


class TestAcceleratedKernel(unittest.TestCase):
    def test_matches_naive_on_many_instances(self):
        rng = np.random.default_rng(123)
        kinds = ["uniform", "clustered", "lattice"]
        for trial in range(200):
            kind = kinds[trial % 3]
            n_a, n_b = rng.integers(1, 501, 2)
            a = gen_point_set(int(n_a), 2 * trial, d=int(rng.integers(1, 4)), kind=kind)
            if trial % 5 == 0:
                b = a
            else:
                b = gen_point_set(int(n_b), 2 * trial + 1, d=a.dim, kind=kind)
            if len(a) < 2 and b is a:
                continue
            try:
                scale = max_separation(a, b)
            except ValueError:
                # every point coincides
                continue
            bins = BinGrid(int(rng.integers(1, 21)))
            naive = cross_pair_counts(a, b, bins, scale)
            fast = cross_pair_counts_accelerated(a, b, bins, scale, refine=int(rng.integers(1, 5)))
            np.testing.assert_array_equal(naive.counts, fast.counts, err_msg=f"trial {trial}")
            self.assertEqual(naive.total_pairs, fast.total_pairs)

    def test_thread_count_does_not_change_counts(self):
        a, b = gen_point_set(400, 5, kind="clustered"), gen_point_set(300, 6, kind="clustered")
        scale = max_separation(a, b)
        counts = [
            cross_pair_counts_accelerated(a, b, BinGrid(10), scale, n_workers=n).counts
            for n in (1, 2, numba.config.NUMBA_NUM_THREADS)
        ]
        for c in counts[1:]:
            np.testing.assert_array_equal(counts[0], c)

    def test_self_pairs_conserved(self):
        a = gen_point_set(500, 7, kind="clustered")
        h = cross_pair_counts_accelerated(a, a, BinGrid(10), max_separation(a, a), refine=3)
        self.assertEqual(h.counts.sum(), 500 * 499 // 2)

    @unittest.skipUnless(RUN_SLOW, "set PARAMCORR_RUN_SLOW=1 to run")
    def test_large_clustered_sets(self):
        a = gen_point_set(10_000, 8, kind="clustered")
        b = gen_point_set(10_000, 9, kind="clustered")
        scale = max_separation(a, b)
        naive = cross_pair_counts(a, b, BinGrid(10), scale)
        fast = cross_pair_counts_accelerated(a, b, BinGrid(10), scale, refine=4)
        np.testing.assert_array_equal(naive.counts, fast.counts)

    @unittest.skipUnless(RUN_SLOW, "set PARAMCORR_RUN_SLOW=1 to run")
    @unittest.skipUnless(numba.config.NUMBA_NUM_THREADS >= 4, "needs at least 4 cores")
    def test_performance_floor(self):
        warm = gen_point_set(50, 0)
        cross_pair_counts_accelerated(warm, warm, BinGrid(10), max_separation(warm, warm), refine=8)

        a, b = gen_point_set(100_000, 10), gen_point_set(100_000, 11)
        # Both sets lie in the unit square
        scale = SeparationScale(math.sqrt(2.0))

        start = time.perf_counter()
        four = cross_pair_counts_accelerated(a, b, BinGrid(10), scale, n_workers=4, refine=8)
        t_four = time.perf_counter() - start
        start = time.perf_counter()
        one = cross_pair_counts_accelerated(a, b, BinGrid(10), scale, n_workers=1, refine=8)
        t_one = time.perf_counter() - start

        self.assertLess(t_four, 60.0)
        self.assertGreater(t_one / t_four, 2.0)
        np.testing.assert_array_equal(one.counts, four.counts)
        self.assertEqual(four.counts.sum(), 10**10)


class TestHistogram(unittest.TestCase):
    def _raw(self, counts, total, kind="DD", n_bins=None):
        return PairCountHistogram(counts, total, BinGrid(n_bins or len(counts)), kind, ("a", "b"))

    def test_normalize(self):
        h = normalize_counts(self._raw([2, 0, 2], 4))
        np.testing.assert_array_equal(h.counts, [0.5, 0.0, 0.5])
        np.testing.assert_array_equal(h.raw_counts, [2, 0, 2])
        self.assertTrue(h.normalized)

    def test_normalize_zero_counts(self):
        h = normalize_counts(self._raw([0, 0, 0], 10))
        np.testing.assert_array_equal(h.counts, [0.0, 0.0, 0.0])

    def test_normalize_twice(self):
        with self.assertRaises(AlreadyNormalizedError):
            normalize_counts(normalize_counts(self._raw([1, 1], 2)))

    def test_normalize_without_pairs(self):
        with self.assertRaises(ValueError):
            normalize_counts(self._raw([0, 0], 0))

    def test_pooling(self):
        pooled = self._raw([1, 2], 5, "RR") + self._raw([3, 0], 7, "RR")
        np.testing.assert_array_equal(pooled.counts, [4, 2])
        self.assertEqual(pooled.total_pairs, 12)
        with self.assertRaises(BinGridMismatchError):
            self._raw([1, 2], 3) + self._raw([1, 2, 3], 6)
        with self.assertRaises(ValueError):
            self._raw([1, 2], 3, "DR") + self._raw([1, 2], 3, "RD")

    def test_shape_must_match_grid(self):
        with self.assertRaises(BinGridMismatchError):
            self._raw([1, 2, 3], 6, n_bins=2)

    def test_dataframe(self):
        df = normalize_counts(self._raw([1, 3], 4)).to_dataframe()
        self.assertEqual(list(df.columns), ["bin_lo", "bin_hi", "count", "normalized_count"])
        np.testing.assert_array_equal(df["normalized_count"], [0.25, 0.75])
        np.testing.assert_array_equal(df["count"], [1, 3])

    def test_total_pairs(self):
        a = gen_point_set(5, 0)
        self.assertEqual(total_pairs(a, a), 10)
        self.assertEqual(total_pairs(a, PointSet(a.points, a.provenance)), 25)
        self.assertEqual(total_pairs(a, gen_point_set(3, 1)), 15)


if __name__ == "__main__":
    unittest.main()
