"""Numba kernels for pair counting.

Every kernel computes a separation as ``sqrt(sum_k (a_k - b_k)**2) / r_max``
with the terms accumulated in axis order, and assigns it to bin ``k`` when
``edges[k] <= s < edges[k + 1]`` (last bin closed on the right). The NumPy
reference kernel in :mod:`~.correlation.paircounts` uses the same operations,
so both produce bit-identical histograms.
"""

import math

import numpy as np
from numba import njit, prange


@njit(cache=True)
def bin_index(s, edges, n_bins):
    k = int(s * n_bins)
    if k >= n_bins:
        k = n_bins - 1
    while k > 0 and s < edges[k]:
        k -= 1
    while k < n_bins - 1 and s >= edges[k + 1]:
        k += 1
    return k


@njit(cache=True)
def _separation(a, i, b, j, r_max):
    d2 = 0.0
    for k in range(a.shape[1]):
        dk = a[i, k] - b[j, k]
        d2 = d2 + dk * dk
    return math.sqrt(d2) / r_max


@njit(parallel=True, cache=True)
def max_cross_distance(a, b):
    """Largest Euclidean distance over all pairs of ``a`` x ``b``."""
    n_a = a.shape[0]
    per_row = np.zeros(n_a)
    for i in prange(n_a):
        m = 0.0
        for j in range(b.shape[0]):
            d = _separation(a, i, b, j, 1.0)
            if d > m:
                m = d
        per_row[i] = m
    return per_row.max()


@njit(cache=True)
def _box_bounds(a_box, ca, b_box, cb, r_max):
    """Lower/upper bounds on the separation of any pair between two cell boxes.

    Rounding is monotone in every operation, so the computed separation of
    each pair lies inside the computed bounds exactly.
    """
    gap2 = 0.0
    far2 = 0.0
    for k in range(a_box.shape[1] // 2):
        a_lo = a_box[ca, 2 * k]
        a_hi = a_box[ca, 2 * k + 1]
        b_lo = b_box[cb, 2 * k]
        b_hi = b_box[cb, 2 * k + 1]
        gap = 0.0
        if b_lo - a_hi > gap:
            gap = b_lo - a_hi
        if a_lo - b_hi > gap:
            gap = a_lo - b_hi
        far = a_hi - b_lo
        if b_hi - a_lo > far:
            far = b_hi - a_lo
        gap2 = gap2 + gap * gap
        far2 = far2 + far * far
    return math.sqrt(gap2) / r_max, math.sqrt(far2) / r_max


@njit(parallel=True, cache=True)
def grid_pair_counts(
    a_pts,
    a_start,
    a_count,
    a_box,
    b_pts,
    b_start,
    b_count,
    b_box,
    r_max,
    edges,
    same,
):
    """Histogram of pair separations using cell-sorted points.

    Points of each set are sorted by grid cell; ``*_start``/``*_count`` give
    the slice of each non-empty cell and ``*_box`` its bounding box as
    ``(lo_1, hi_1, lo_2, hi_2, ...)``. Cell pairs whose separation bounds
    fall into one bin are counted without evaluating distances.

    When ``same`` is True, ``a`` and ``b`` are the same cell-sorted set and
    each unordered pair ``i < j`` is counted once.

    Returns:
        Tuple of the ``int64`` histogram and the number of separations above 1.
    """
    n_bins = edges.shape[0] - 1
    n_ca = a_start.shape[0]
    n_cb = b_start.shape[0]
    counts = np.zeros((n_ca, n_bins), dtype=np.int64)
    overflow = np.zeros(n_ca, dtype=np.int64)
    for ca in prange(n_ca):
        cb_first = ca if same else 0
        for cb in range(cb_first, n_cb):
            s_lo, s_hi = _box_bounds(a_box, ca, b_box, cb, r_max)
            if s_hi <= 1.0:
                k_lo = bin_index(s_lo, edges, n_bins)
                if k_lo == bin_index(s_hi, edges, n_bins):
                    if same and ca == cb:
                        n = a_count[ca] * (a_count[ca] - 1) // 2
                    else:
                        n = a_count[ca] * b_count[cb]
                    counts[ca, k_lo] += n
                    continue
            i_end = a_start[ca] + a_count[ca]
            j_end = b_start[cb] + b_count[cb]
            for i in range(a_start[ca], i_end):
                j_first = i + 1 if (same and ca == cb) else b_start[cb]
                for j in range(j_first, j_end):
                    s = _separation(a_pts, i, b_pts, j, r_max)
                    if s > 1.0:
                        overflow[ca] += 1
                    else:
                        counts[ca, bin_index(s, edges, n_bins)] += 1
    return counts.sum(axis=0), overflow.sum()
