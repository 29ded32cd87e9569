import os
from typing import Iterable, Optional, Tuple, Union

import numba
import numpy as np
import pandas as pd

from paramcorr.config import DEFAULT_N_BINS
from paramcorr.correlation import _kernels
from paramcorr.data.transform import PointSet
from paramcorr.data.utils import write_csv
from paramcorr.errors import (
    AlreadyNormalizedError,
    BinGridMismatchError,
    EmptyPointSetError,
    SeparationOverflowError,
)

PAIR_KINDS = ("DD", "DR", "RD", "RR")

SCALE_SOURCES = ("data-data", "union", "user")


class BinGrid:
    """Uniform bins of normalised separation over [0, 1].

    Args:
        n_bins (int, optional):
            Number of bins. Defaults to 10.
    """

    def __init__(self, n_bins: int = DEFAULT_N_BINS):
        if int(n_bins) < 1:
            raise ValueError(f"n_bins must be a positive integer, got {n_bins}")
        self.n_bins = int(n_bins)
        edges = np.linspace(0.0, 1.0, self.n_bins + 1)
        edges.setflags(write=False)
        self.edges = edges

    @property
    def lo(self) -> np.ndarray:
        return self.edges[:-1]

    @property
    def hi(self) -> np.ndarray:
        return self.edges[1:]

    @property
    def centers(self) -> np.ndarray:
        """Arithmetic midpoints of the bin edges."""
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def __len__(self):
        return self.n_bins

    def __eq__(self, other):
        return isinstance(other, BinGrid) and self.n_bins == other.n_bins

    def __hash__(self):
        return hash(("BinGrid", self.n_bins))

    def __repr__(self):
        return f"BinGrid(n_bins={self.n_bins})"


class SeparationScale:
    """Maximum raw separation used to map pair distances into [0, 1].

    Args:
        r_max (float):
            Maximum raw separation. Must be positive and finite.
        source (str, optional):
            How ``r_max`` was obtained: ``"data-data"``, ``"union"`` (all four
            pair kinds of an analysis) or ``"user"``. Defaults to ``"user"``.
    """

    def __init__(self, r_max: float, source: str = "user"):
        r_max = float(r_max)
        if not (np.isfinite(r_max) and r_max > 0):
            raise ValueError(
                f"r_max must be positive and finite, got {r_max}. "
                f"All points may be coincident."
            )
        if source not in SCALE_SOURCES:
            raise ValueError(f"source must be one of {SCALE_SOURCES}, got '{source}'")
        self.r_max = r_max
        self.source = source

    def to_dict(self) -> dict:
        return {"r_max": self.r_max, "source": self.source}

    def __eq__(self, other):
        return (
            isinstance(other, SeparationScale)
            and self.r_max == other.r_max
            and self.source == other.source
        )

    def __repr__(self):
        return f"SeparationScale(r_max={self.r_max!r}, source='{self.source}')"


class PairCountHistogram:
    """Binned pair separations between two point sets.

    Raw histograms hold integer counts; :func:`normalize_counts` divides them
    by ``total_pairs``. Raw histograms on the same grid and of the same kind
    can be added, which is how counts over several random realizations are
    pooled before normalising.

    Args:
        counts (:class:`numpy:numpy.ndarray`):
            Per-bin counts (raw or normalised).
        total_pairs (int):
            Number of admissible pairs: ``n_a * n_b`` for distinct sets,
            ``n * (n - 1) / 2`` for a set against itself.
        bins (:class:`BinGrid`):
            Grid the counts are binned on.
        pair_kind (str):
            One of ``"DD"``, ``"DR"``, ``"RD"``, ``"RR"``.
        labels (Tuple[str, str]):
            Labels of the two point sets.
        normalized (bool, optional):
            Whether ``counts`` are already divided by ``total_pairs``.
        raw_counts (:class:`numpy:numpy.ndarray`, optional):
            Integer counts kept alongside normalised ones.
        scale (:class:`SeparationScale`, optional):
            Scale the separations were normalised with.
    """

    def __init__(
        self,
        counts,
        total_pairs: int,
        bins: BinGrid,
        pair_kind: str,
        labels: Tuple[str, str],
        normalized: bool = False,
        raw_counts=None,
        scale: Optional[SeparationScale] = None,
    ):
        if pair_kind not in PAIR_KINDS:
            raise ValueError(f"pair_kind must be one of {PAIR_KINDS}, got '{pair_kind}'")
        counts = np.asarray(counts, dtype=float if normalized else np.int64)
        if counts.shape != (bins.n_bins,):
            raise BinGridMismatchError(
                f"counts have shape {counts.shape} but grid has {bins.n_bins} bins"
            )
        self.counts = counts
        self.total_pairs = int(total_pairs)
        self.bins = bins
        self.pair_kind = pair_kind
        self.labels = tuple(labels)
        self.normalized = bool(normalized)
        self.raw_counts = None if raw_counts is None else np.asarray(raw_counts, dtype=np.int64)
        self.scale = scale

    def __add__(self, other: "PairCountHistogram") -> "PairCountHistogram":
        if not isinstance(other, PairCountHistogram):
            return NotImplemented
        if self.normalized or other.normalized:
            raise AlreadyNormalizedError("Only raw pair-count histograms can be added")
        if self.bins != other.bins:
            raise BinGridMismatchError(f"Cannot add histograms on {self.bins} and {other.bins}")
        if self.pair_kind != other.pair_kind:
            raise ValueError(f"Cannot add {self.pair_kind} and {other.pair_kind} histograms")
        return PairCountHistogram(
            self.counts + other.counts,
            self.total_pairs + other.total_pairs,
            self.bins,
            self.pair_kind,
            self.labels,
            scale=self.scale,
        )

    def to_dataframe(self) -> pd.DataFrame:
        """Table with columns ``bin_lo, bin_hi, count, normalized_count``."""
        if self.normalized:
            raw = self.raw_counts if self.raw_counts is not None else np.full(self.bins.n_bins, np.nan)
            normalized = self.counts
        else:
            raw = self.counts
            normalized = self.counts / self.total_pairs if self.total_pairs else np.zeros(self.bins.n_bins)
        return pd.DataFrame(
            {
                "bin_lo": self.bins.lo,
                "bin_hi": self.bins.hi,
                "count": raw,
                "normalized_count": normalized,
            }
        )

    def to_csv(self, path: Union[str, os.PathLike]) -> str:
        return write_csv(path, self.to_dataframe())

    def __repr__(self):
        state = "normalized" if self.normalized else "raw"
        return (
            f"PairCountHistogram({self.pair_kind} {self.labels[0]} x {self.labels[1]}, "
            f"{state}, total_pairs={self.total_pairs}, counts={self.counts.tolist()})"
        )


def _check_non_empty(*point_sets: PointSet):
    for ps in point_sets:
        if len(ps) == 0:
            raise EmptyPointSetError(f"Point set '{ps.label}' is empty")


def _check_dims(a: PointSet, b: PointSet):
    if a.dim != b.dim:
        raise ValueError(f"Point sets have different dimensions: {a.dim} and {b.dim}")


def is_same_set(a: PointSet, b: PointSet) -> bool:
    """Whether ``a`` and ``b`` are one point set (self-pairing rule applies).

    Decided by identity: two distinct point sets with equal points and
    provenance are still cross-paired, self-pairs included.
    """
    return a is b


def total_pairs(a: PointSet, b: PointSet) -> int:
    if is_same_set(a, b):
        return len(a) * (len(a) - 1) // 2
    return len(a) * len(b)


def max_separation(a: PointSet, b: PointSet) -> SeparationScale:
    """Largest Euclidean distance over all cross pairs ``a x b``.

    Raises:
        EmptyPointSetError: If either set is empty.
    """
    _check_non_empty(a, b)
    _check_dims(a, b)
    r_max = _kernels.max_cross_distance(
        np.ascontiguousarray(a.points), np.ascontiguousarray(b.points)
    )
    return SeparationScale(r_max, source="data-data")


def union_separation(
    data_a: PointSet,
    data_b: PointSet,
    randoms_a: Union[PointSet, Iterable[PointSet]],
    randoms_b: Union[PointSet, Iterable[PointSet]],
) -> SeparationScale:
    """Largest separation over the four pair kinds D1D2, D1R2, D2R1 and R1R2.

    ``randoms_a`` and ``randoms_b`` may each be a single point set or the
    realizations of one, in which case every realization takes part.
    """
    rs_a = [randoms_a] if isinstance(randoms_a, PointSet) else list(randoms_a)
    rs_b = [randoms_b] if isinstance(randoms_b, PointSet) else list(randoms_b)
    pairs = [(data_a, data_b)]
    pairs += [(data_a, r2) for r2 in rs_b]
    pairs += [(data_b, r1) for r1 in rs_a]
    pairs += [(r1, r2) for r1 in rs_a for r2 in rs_b]
    r_max = max(max_separation(x, y).r_max for x, y in pairs)
    return SeparationScale(r_max, source="union")


def _naive_histogram(a_pts, b_pts, edges, r_max, same, chunk_elements=2**22):
    n_bins = edges.shape[0] - 1
    n_a, n_b = a_pts.shape[0], b_pts.shape[0]
    counts = np.zeros(n_bins, dtype=np.int64)
    n_overflow = 0
    chunk = max(1, chunk_elements // max(n_b, 1))
    for i0 in range(0, n_a, chunk):
        i1 = min(n_a, i0 + chunk)
        d2 = np.zeros((i1 - i0, n_b))
        for k in range(a_pts.shape[1]):
            dk = a_pts[i0:i1, k][:, None] - b_pts[None, :, k]
            d2 += dk * dk
        s = np.sqrt(d2) / r_max
        if same:
            # i < j only
            s = s[np.arange(i0, i1)[:, None] < np.arange(n_b)[None, :]]
        else:
            s = s.ravel()
        over = s > 1.0
        n_overflow += int(over.sum())
        idx = np.searchsorted(edges, s[~over], side="right") - 1
        idx = np.minimum(idx, n_bins - 1)
        counts += np.bincount(idx, minlength=n_bins)
    return counts, n_overflow


def cross_pair_counts(
    a: PointSet,
    b: PointSet,
    bins: BinGrid,
    scale: SeparationScale,
    pair_kind: str = "DD",
) -> PairCountHistogram:
    """Histogram of normalised separations ``d(a_i, b_j) / r_max`` (reference kernel).

    Bin ``k`` holds separations with ``edges[k] <= s < edges[k + 1]``; the last
    bin is closed on the right so that ``s == 1`` is counted. Coincident points
    fall into bin 0. When ``a`` and ``b`` are the same point set, self-pairs
    are excluded and each unordered pair is counted once.

    Args:
        a (:class:`~.data.transform.PointSet`): First point set.
        b (:class:`~.data.transform.PointSet`): Second point set.
        bins (:class:`BinGrid`): Separation bins.
        scale (:class:`SeparationScale`): Normalising scale.
        pair_kind (str, optional): Kind recorded on the histogram. Defaults to ``"DD"``.

    Returns:
        :class:`PairCountHistogram`: Raw (unnormalised) counts.

    Raises:
        EmptyPointSetError: If either set is empty.
        SeparationOverflowError: If a separation exceeds ``scale.r_max``.
    """
    _check_non_empty(a, b)
    _check_dims(a, b)
    same = is_same_set(a, b)
    counts, n_overflow = _naive_histogram(a.points, b.points, bins.edges, scale.r_max, same)
    if n_overflow:
        raise SeparationOverflowError(n_overflow, scale.r_max)
    return PairCountHistogram(
        counts, total_pairs(a, b), bins, pair_kind, (a.label, b.label), scale=scale
    )


def normalize_counts(h: PairCountHistogram) -> PairCountHistogram:
    """Divide counts by ``total_pairs``.

    Raises:
        AlreadyNormalizedError: If ``h`` is already normalised.
        ValueError: If ``h.total_pairs`` is zero.
    """
    if h.normalized:
        raise AlreadyNormalizedError(f"Histogram {h.pair_kind} {h.labels} is already normalized")
    if h.total_pairs == 0:
        raise ValueError(
            f"Cannot normalize {h.pair_kind} histogram {h.labels} with zero total pairs"
        )
    return PairCountHistogram(
        h.counts / h.total_pairs,
        h.total_pairs,
        h.bins,
        h.pair_kind,
        h.labels,
        normalized=True,
        raw_counts=h.counts,
        scale=h.scale,
    )


def _cell_sort(points: np.ndarray, origin: np.ndarray, cell_size: float):
    """Sort points by grid cell.

    Returns:
        Tuple of the sorted points, per-cell start offsets, per-cell counts and
        per-cell bounding boxes ``(lo_1, hi_1, lo_2, hi_2, ...)``.
    """
    coords = np.floor((points - origin) / cell_size).astype(np.int64)
    _, inverse = np.unique(coords, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    sorted_pts = np.ascontiguousarray(points[order])
    counts = np.bincount(inverse).astype(np.int64)
    starts = np.zeros_like(counts)
    starts[1:] = np.cumsum(counts)[:-1]
    box = np.empty((counts.shape[0], 2 * points.shape[1]))
    box[:, 0::2] = np.minimum.reduceat(sorted_pts, starts, axis=0)
    box[:, 1::2] = np.maximum.reduceat(sorted_pts, starts, axis=0)
    return sorted_pts, starts, counts, box


def cross_pair_counts_accelerated(
    a: PointSet,
    b: PointSet,
    bins: BinGrid,
    scale: SeparationScale,
    pair_kind: str = "DD",
    n_workers: Optional[int] = None,
    refine: int = 1,
) -> PairCountHistogram:
    """Grid-accelerated version of :func:`cross_pair_counts` with identical output.

    Points are sorted into a uniform grid with cell size
    ``r_max / (n_bins * refine)``. Pairs of cells whose whole separation range
    falls inside one bin are counted in bulk; all other pairs are evaluated
    with the same arithmetic and bin rule as the reference kernel. Work is
    split over cells of ``a`` and merged as integers, so the result does not
    depend on the number of threads.

    Args:
        a, b, bins, scale, pair_kind:
            As :func:`cross_pair_counts`.
        n_workers (int, optional):
            Number of numba threads. Defaults to numba's configured count.
        refine (int, optional):
            Grid cells per bin width. With ``refine=1`` a cell pair usually
            straddles a bin edge, so almost every distance is evaluated;
            values around 8 count most cell pairs in bulk for 2-D sets of
            10^5 points. Counts do not depend on it. Defaults to 1.

    Returns:
        :class:`PairCountHistogram`: Raw (unnormalised) counts.
    """
    _check_non_empty(a, b)
    _check_dims(a, b)
    if int(refine) < 1:
        raise ValueError(f"refine must be >= 1, got {refine}")
    same = is_same_set(a, b)
    origin = np.minimum(a.points.min(axis=0), b.points.min(axis=0))
    cell_size = scale.r_max / (bins.n_bins * int(refine))

    a_sorted = _cell_sort(a.points, origin, cell_size)
    b_sorted = a_sorted if same else _cell_sort(b.points, origin, cell_size)

    previous_threads = numba.get_num_threads()
    if n_workers is not None:
        numba.set_num_threads(max(1, min(int(n_workers), numba.config.NUMBA_NUM_THREADS)))
    try:
        counts, n_overflow = _kernels.grid_pair_counts(
            *a_sorted, *b_sorted, scale.r_max, np.asarray(bins.edges), same
        )
    finally:
        numba.set_num_threads(previous_threads)

    if n_overflow:
        raise SeparationOverflowError(int(n_overflow), scale.r_max)
    return PairCountHistogram(
        counts, total_pairs(a, b), bins, pair_kind, (a.label, b.label), scale=scale
    )


def pair_counts(
    a: PointSet,
    b: PointSet,
    bins: BinGrid,
    scale: SeparationScale,
    pair_kind: str = "DD",
    kernel: str = "accelerated",
    n_workers: Optional[int] = None,
    refine: int = 1,
) -> PairCountHistogram:
    """Dispatch to the ``"naive"`` or ``"accelerated"`` pair-count kernel.

    ``n_workers`` and ``refine`` only apply to the accelerated kernel.
    """
    if kernel == "naive":
        return cross_pair_counts(a, b, bins, scale, pair_kind)
    elif kernel == "accelerated":
        return cross_pair_counts_accelerated(
            a, b, bins, scale, pair_kind, n_workers=n_workers, refine=refine
        )
    raise ValueError(f"kernel must be 'naive' or 'accelerated', got '{kernel}'")
