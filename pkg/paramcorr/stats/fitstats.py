import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from paramcorr.config import DEFAULT_FIT_ALPHA
from paramcorr.errors import FitError


@dataclass(frozen=True)
class PowerLawFit:
    """Fit of ``xi(r) = A / r``.

    Args:
        A (float): Amplitude.
        n_points_used (int): Number of defined bins that entered the fit.
        residual_sum_squares (float): ``sum_k (xi_k - A / r_k)**2`` over those bins.
        weighted (bool): Whether bins were weighted by ``1 / sigma**2``.
    """

    A: float
    n_points_used: int
    residual_sum_squares: float
    weighted: bool = False

    def predict(self, r) -> np.ndarray:
        return self.A / np.asarray(r, dtype=float)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class KsReport:
    """Result of a Kolmogorov-Smirnov test.

    ``n2`` is None for one-sample tests. ``reject`` is True when
    ``p_value < alpha``.
    """

    d_statistic: float
    p_value: float
    n1: int
    n2: Optional[int]
    alpha: float = DEFAULT_FIT_ALPHA
    method: str = "two-sample"

    @property
    def reject(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict:
        return {**asdict(self), "reject": self.reject}


def fit_inverse_power_law(r, xi, sigma=None) -> PowerLawFit:
    """Least-squares amplitude of ``xi = A / r`` with the exponent fixed at -1.

    Undefined bins (NaN ``xi``) are skipped. Unweighted,
    ``A = sum(xi / r) / sum(1 / r**2)``. With ``sigma`` the bins are weighted
    by ``w = 1 / sigma**2``, ``A = sum(w * xi / r) / sum(w / r**2)``; bins
    without a finite positive sigma are then skipped.

    Args:
        r (array-like): Bin centers.
        xi (array-like): Estimator values, NaN where undefined.
        sigma (array-like, optional): Per-bin standard deviations.

    Returns:
        :class:`PowerLawFit`

    Raises:
        ValueError: If any ``r <= 0`` or shapes differ.
        FitError: If no bin is usable.
    """
    r = np.asarray(r, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if r.shape != xi.shape:
        raise ValueError(f"r and xi have different shapes: {r.shape} and {xi.shape}")
    if np.any(r <= 0):
        raise ValueError(f"Power-law fit needs r > 0, got minimum {r.min()}")
    use = np.isfinite(xi)
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        good_sigma = np.isfinite(sigma) & (sigma > 0)
        if np.any(use & ~good_sigma):
            warnings.warn(
                f"Skipping {int((use & ~good_sigma).sum())} bins without a finite positive "
                f"sigma in the weighted fit.",
                UserWarning,
            )
        use &= good_sigma
    if not use.any():
        raise FitError("No defined (r, xi) points to fit")

    r_u, xi_u = r[use], xi[use]
    w = np.ones_like(r_u) if sigma is None else 1.0 / sigma[use] ** 2
    A = np.sum(w * xi_u / r_u) / np.sum(w / r_u**2)
    rss = np.sum((xi_u - A / r_u) ** 2)
    return PowerLawFit(float(A), int(use.sum()), float(rss), weighted=sigma is not None)


def _ecdf(sorted_sample: np.ndarray, at: np.ndarray) -> np.ndarray:
    # Right-continuous: F(t) = #{x <= t} / n
    return np.searchsorted(sorted_sample, at, side="right") / sorted_sample.shape[0]


def ks_two_sample(x, y, alpha: float = DEFAULT_FIT_ALPHA) -> KsReport:
    """Two-sample Kolmogorov-Smirnov test.

    ``D = sup |F_x - F_y|`` with both empirical CDFs evaluated at every point
    of the pooled sample, so ties are handled exactly. The p-value is the
    upper tail of the limiting Kolmogorov distribution at
    ``sqrt(n1 * n2 / (n1 + n2)) * D``.

    Raises:
        ValueError: If either sample is empty or non-finite.
    """
    x = np.sort(np.asarray(x, dtype=float).ravel())
    y = np.sort(np.asarray(y, dtype=float).ravel())
    if x.size == 0 or y.size == 0:
        raise ValueError("KS test needs two non-empty samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("KS test samples must be finite")
    pooled = np.concatenate([x, y])
    d = float(np.max(np.abs(_ecdf(x, pooled) - _ecdf(y, pooled))))
    n1, n2 = x.size, y.size
    en = n1 * n2 / (n1 + n2)
    p = float(stats.kstwobign.sf(np.sqrt(en) * d))
    return KsReport(d, min(1.0, max(0.0, p)), n1, n2, alpha, "two-sample")


def ks_one_sample(x, cdf: Callable, alpha: float = DEFAULT_FIT_ALPHA) -> KsReport:
    """One-sample Kolmogorov-Smirnov test of ``x`` against ``cdf`` (asymptotic p-value)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("KS test needs a non-empty sample")
    res = stats.kstest(x, cdf, method="asymp")
    return KsReport(float(res.statistic), float(res.pvalue), x.size, None, alpha, "one-sample")


def ks_pareto(x, b: float, scale: float = 1.0, alpha: float = DEFAULT_FIT_ALPHA) -> KsReport:
    """One-sample KS test of ``x`` against a Pareto distribution with shape ``b``."""
    if not (b > 0 and scale > 0):
        raise ValueError(f"Pareto shape and scale must be positive, got b={b}, scale={scale}")
    report = ks_one_sample(x, stats.pareto(b, scale=scale).cdf, alpha)
    return KsReport(report.d_statistic, report.p_value, report.n1, None, alpha, "pareto")


def goodness_of_fit(
    xi,
    fit: PowerLawFit,
    r: Sequence[float],
    alpha: float = DEFAULT_FIT_ALPHA,
) -> KsReport:
    """Two-sample KS test between the defined ``xi`` values and ``A / r`` on the same bins."""
    xi = np.asarray(xi, dtype=float)
    r = np.asarray(r, dtype=float)
    use = np.isfinite(xi)
    if not use.any():
        raise FitError("No defined xi values to test")
    return ks_two_sample(xi[use], fit.predict(r[use]), alpha=alpha)
