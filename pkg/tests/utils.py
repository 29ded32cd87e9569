import bisect
import math
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from paramcorr.data.catalog import Catalog
from paramcorr.data.transform import PointSet


def gen_catalog(
    n: int,
    seed: int,
    label: str = "catalog",
    mass_range: Tuple[float, float] = (9.0, 11.5),
    size_range: Tuple[float, float] = (0.5, 10.0),
    z_range: Optional[Tuple[float, float]] = None,
    component: Optional[str] = None,
) -> Catalog:
    """Generate a catalog with masses and sizes uniform over the given ranges.

    Args:
        n (int):
            Number of records.
        seed (int):
            Seed of the generator.
        label (str, optional):
            Catalog label. Defaults to ``"catalog"``.
        mass_range, size_range (Tuple[float, float], optional):
            Uniform ranges of log-mass and size in kpc.
        z_range (Tuple[float, float], optional):
            Uniform redshift range. Defaults to None (no redshift).
        component (str, optional):
            Component of every record. Defaults to None.

    Returns:
        :class:`paramcorr.data.catalog.Catalog`
    """
    return Catalog(gen_catalog_df(n, seed, mass_range, size_range, z_range, component, label), label)


def gen_catalog_df(
    n: int,
    seed: int,
    mass_range=(9.0, 11.5),
    size_range=(0.5, 10.0),
    z_range=None,
    component=None,
    source: str = "synthetic",
) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    df = pd.DataFrame(
        {
            "mass": rng.uniform(*mass_range, n),
            "size": rng.uniform(*size_range, n),
            "redshift": rng.uniform(*z_range, n) if z_range is not None else np.nan,
            "source": source,
            "component": component,
        }
    )
    return df


def gen_clustered_pair(
    n: int = 500, seed: int = 0, spread: float = 0.08, jitter: float = 0.02
) -> Tuple[Catalog, Catalog]:
    """Two catalogs where every point of ``b`` is a small jitter of a point of ``a``.

    Points of ``a`` are Gaussian around (10.5, 1.5) with standard deviation
    ``spread`` per axis.
    """
    rng = np.random.default_rng(seed)
    mass = 10.0 + rng.normal(0.5, spread, n)
    size = 1.0 + rng.normal(0.5, spread, n)
    a = pd.DataFrame({"mass": mass, "size": size})
    b = pd.DataFrame(
        {"mass": mass + rng.normal(0.0, jitter, n), "size": size + rng.normal(0.0, jitter, n)}
    )
    return Catalog(a, "clustered-a"), Catalog(b, "clustered-b")


def gen_point_set(n: int, seed: int, d: int = 2, label: str = "points", kind: str = "uniform") -> PointSet:
    """Random point set: ``"uniform"`` in the unit cube, ``"clustered"`` Gaussian
    blobs, or ``"lattice"`` integer points in [0, 10]."""
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        pts = rng.random((n, d))
    elif kind == "clustered":
        centers = rng.random((3, d))
        pts = centers[rng.integers(0, 3, n)] + rng.normal(0, 0.03, (n, d))
    elif kind == "lattice":
        pts = rng.integers(0, 11, (n, d)).astype(float)
    else:
        raise ValueError(kind)
    return PointSet(pts, {"label": f"{label}-{seed}"})


def brute_force_counts(
    a: np.ndarray, b: np.ndarray, n_bins: int, r_max: float, same: bool = False
) -> np.ndarray:
    """Double-loop pair counts with the half-open bin rule and a closed last bin."""
    edges = list(np.linspace(0.0, 1.0, n_bins + 1))
    counts = np.zeros(n_bins, dtype=np.int64)
    for i in range(a.shape[0]):
        for j in range(i + 1 if same else 0, b.shape[0]):
            d2 = 0.0
            for k in range(a.shape[1]):
                dk = float(a[i, k]) - float(b[j, k])
                d2 = d2 + dk * dk
            s = math.sqrt(d2) / r_max
            assert s <= 1.0
            counts[min(bisect.bisect_right(edges, s) - 1, n_bins - 1)] += 1
    return counts


def direct_LN(samples: Sequence[np.ndarray]) -> float:
    """Rank statistic evaluated term by term with an explicit inverse."""
    samples = [np.atleast_2d(np.asarray(s, dtype=float).T).T for s in samples]
    pooled = np.concatenate(samples)
    N, p = pooled.shape
    E = np.stack([stats.rankdata(pooled[:, i]) for i in range(p)]) / (N + 1)
    E_bar = E.mean(axis=1)
    V = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            V[i, j] = np.sum(E[i] * E[j]) / N - E_bar[i] * E_bar[j]
    V_inv = np.linalg.inv(V)
    L = 0.0
    start = 0
    for s in samples:
        n_k = s.shape[0]
        T_k = E[:, start : start + n_k].mean(axis=1)
        start += n_k
        dev = T_k - E_bar
        L += n_k * dev @ V_inv @ dev
    return float(L)
