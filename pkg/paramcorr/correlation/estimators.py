import json
import os
from copy import deepcopy
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import xarray as xr
from tqdm import tqdm

from paramcorr.config import DEFAULT_N_BINS
from paramcorr.correlation.paircounts import (
    BinGrid,
    PairCountHistogram,
    SeparationScale,
    is_same_set,
    max_separation,
    normalize_counts,
    pair_counts,
    union_separation,
)
from paramcorr.data.catalog import Catalog
from paramcorr.data.randoms import RandomSpec, generate_randoms
from paramcorr.data.transform import AxisTransformSpec, PointSet, to_point_set
from paramcorr.data.utils import generator_id, make_rng, replicate_seed, write_csv, write_json
from paramcorr.errors import BinGridMismatchError, NotNormalizedError

ESTIMATORS = (1, 2, 3, 4)
"""Estimator ids: 1 and 2 are the natural estimators, 3 and 4 the improved ones."""


def _check_histograms(*hists: PairCountHistogram):
    for h in hists:
        if not h.normalized:
            raise NotNormalizedError(
                f"Estimators need normalized pair counts, got raw {h.pair_kind} histogram "
                f"{h.labels}. Use normalize_counts first."
            )
    grid = hists[0].bins
    for h in hists[1:]:
        if h.bins != grid:
            raise BinGridMismatchError(f"Histograms on {grid} and {h.bins} cannot be combined")


def _ratio_minus_one(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = num / den - 1.0
    xi[den == 0] = np.nan
    return xi


def xi_natural_1(dd: PairCountHistogram, d2r1: PairCountHistogram) -> np.ndarray:
    """``dd / d2r1 - 1`` per bin; NaN where ``d2r1`` is zero."""
    _check_histograms(dd, d2r1)
    return _ratio_minus_one(dd.counts, d2r1.counts)


def xi_natural_2(dd: PairCountHistogram, d1r2: PairCountHistogram) -> np.ndarray:
    """``dd / d1r2 - 1`` per bin; NaN where ``d1r2`` is zero."""
    _check_histograms(dd, d1r2)
    return _ratio_minus_one(dd.counts, d1r2.counts)


def xi_improved_3(
    dd: PairCountHistogram,
    d1r2: PairCountHistogram,
    d2r1: PairCountHistogram,
    rr: PairCountHistogram,
) -> np.ndarray:
    """``dd * rr / (d1r2 * d2r1) - 1`` per bin; NaN where the denominator is zero."""
    _check_histograms(dd, d1r2, d2r1, rr)
    return _ratio_minus_one(dd.counts * rr.counts, d1r2.counts * d2r1.counts)


def xi_improved_4(
    dd: PairCountHistogram,
    d1r2: PairCountHistogram,
    d2r1: PairCountHistogram,
    rr: PairCountHistogram,
) -> np.ndarray:
    """``(dd - d1r2 - d2r1 + rr) / rr`` per bin; NaN where ``rr`` is zero."""
    _check_histograms(dd, d1r2, d2r1, rr)
    num = dd.counts - d1r2.counts - d2r1.counts + rr.counts
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = num / rr.counts
    xi[rr.counts == 0] = np.nan
    return xi


def compute_estimators(
    dd: PairCountHistogram,
    d1r2: PairCountHistogram,
    d2r1: PairCountHistogram,
    rr: PairCountHistogram,
    estimators: Sequence[int] = ESTIMATORS,
) -> np.ndarray:
    """Array of shape ``(len(estimators), n_bins)`` with the requested estimators."""
    fns = {
        1: lambda: xi_natural_1(dd, d2r1),
        2: lambda: xi_natural_2(dd, d1r2),
        3: lambda: xi_improved_3(dd, d1r2, d2r1, rr),
        4: lambda: xi_improved_4(dd, d1r2, d2r1, rr),
    }
    return np.stack([fns[e]() for e in estimators])


@dataclass
class CorrelationConfig:
    """Settings of one cross-correlation analysis.

    Args:
        seed (int):
            Master seed. Random catalogs and bootstrap replicates derive their
            streams from it.
        transform (:class:`~.data.transform.AxisTransformSpec`, optional):
            Map into feature space. Missing rescale bounds are fitted to the
            union of both catalogs. Defaults to identity axes rescaled to [0, 1].
        n_bins (int, optional):
            Number of separation bins. Defaults to 10.
        estimators (Sequence[int], optional):
            Estimator ids to compute. Defaults to all four.
        random_multiplier (float, optional):
            Random catalog size relative to its data catalog. Defaults to 1.
        realizations (int, optional):
            Independent random catalogs per data catalog; their pair counts
            are pooled. Defaults to 1.
        separation (str, optional):
            Source of ``r_max``: ``"union"``, ``"data-data"`` or ``"user"``.
            Defaults to ``"union"``.
        r_max (float, optional):
            Maximum separation when ``separation == "user"``.
        bootstrap_reps (int, optional):
            Bootstrap replicates attached by :func:`estimate_xi`. 0 disables
            bootstrap errors. Defaults to 0.
        bootstrap_seed (int, optional):
            Seed of the bootstrap replicates. Derived from ``seed`` if None.
        kernel (str, optional):
            ``"accelerated"`` or ``"naive"``. Defaults to ``"accelerated"``.
        n_workers (int, optional):
            Threads of the accelerated kernel.
        refine (int, optional):
            Grid cells per bin width for the accelerated kernel. Defaults to 1.
    """

    seed: int
    transform: AxisTransformSpec = field(default_factory=AxisTransformSpec)
    n_bins: int = DEFAULT_N_BINS
    estimators: Sequence[int] = ESTIMATORS
    random_multiplier: float = 1.0
    realizations: int = 1
    separation: str = "union"
    r_max: Optional[float] = None
    bootstrap_reps: int = 0
    bootstrap_seed: Optional[int] = None
    kernel: str = "accelerated"
    n_workers: Optional[int] = None
    refine: int = 1

    def __post_init__(self):
        self.estimators = tuple(sorted(set(int(e) for e in self.estimators)))
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            raise ValueError(f"estimators must be a non-empty subset of {ESTIMATORS}, got {bad}")
        if int(self.realizations) < 1:
            raise ValueError(f"realizations must be >= 1, got {self.realizations}")
        if self.separation not in ("union", "data-data", "user"):
            raise ValueError(f"Unknown separation source '{self.separation}'")
        if self.separation == "user" and self.r_max is None:
            raise ValueError("separation 'user' needs r_max")
        if self.bootstrap_reps == 1 or self.bootstrap_reps < 0:
            raise ValueError(f"bootstrap_reps must be 0 or >= 2, got {self.bootstrap_reps}")
        if int(self.refine) < 1:
            raise ValueError(f"refine must be >= 1, got {self.refine}")

    @property
    def boot_seed(self) -> int:
        if self.bootstrap_seed is not None:
            return int(self.bootstrap_seed)
        return replicate_seed(self.seed, 2)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "transform": self.transform.config,
            "n_bins": self.n_bins,
            "estimators": list(self.estimators),
            "random_multiplier": self.random_multiplier,
            "realizations": self.realizations,
            "separation": self.separation,
            "r_max": self.r_max,
            "bootstrap_reps": self.bootstrap_reps,
            "bootstrap_seed": self.boot_seed if self.bootstrap_reps else None,
            "kernel": self.kernel,
            "refine": self.refine,
        }


class _FixedParts:
    """Everything of an analysis that stays fixed across bootstrap replicates."""

    def __init__(self, a: Catalog, b: Catalog, cfg: CorrelationConfig, verbose: bool = False):
        self.cfg = cfg
        self.bins = BinGrid(cfg.n_bins)
        self.transform = cfg.transform.fit(a, b)
        self.da = to_point_set(a, self.transform)
        self.db = self.da if a is b else to_point_set(b, self.transform)
        self.same = is_same_set(self.da, self.db)

        self.random_specs: Dict[str, List[RandomSpec]] = {"a": [], "b": []}
        self.r1: List[PointSet] = []
        self.r2: List[PointSet] = []
        for r in range(cfg.realizations):
            spec1 = RandomSpec.for_catalog(len(self.da), replicate_seed(cfg.seed, 0, r), cfg.random_multiplier)
            spec2 = RandomSpec.for_catalog(len(self.db), replicate_seed(cfg.seed, 1, r), cfg.random_multiplier)
            self.random_specs["a"].append(spec1)
            self.random_specs["b"].append(spec2)
            self.r1.append(generate_randoms(self.da, spec1))
            self.r2.append(generate_randoms(self.db, spec2))
        if verbose:
            print(
                f"Generated {cfg.realizations} x 2 random catalogs of "
                f"{self.r1[0].points.shape[0]} and {self.r2[0].points.shape[0]} points"
            )

        if cfg.separation == "union":
            self.scale = union_separation(self.da, self.db, self.r1, self.r2)
        elif cfg.separation == "data-data":
            self.scale = max_separation(self.da, self.db)
        else:
            self.scale = SeparationScale(cfg.r_max, source="user")

        rr = self._pooled(lambda r: self.counts(self.r1[r], self.r2[r], "RR"))
        self.rr = normalize_counts(rr)

    def counts(self, x: PointSet, y: PointSet, kind: str) -> PairCountHistogram:
        return pair_counts(
            x,
            y,
            self.bins,
            self.scale,
            kind,
            kernel=self.cfg.kernel,
            n_workers=self.cfg.n_workers,
            refine=self.cfg.refine,
        )

    def _pooled(self, fn) -> PairCountHistogram:
        h = fn(0)
        for r in range(1, self.cfg.realizations):
            h = h + fn(r)
        return h

    def data_counts(self, da: PointSet, db: PointSet) -> Tuple[PairCountHistogram, ...]:
        dd = normalize_counts(self.counts(da, db, "DD"))
        d1r2 = normalize_counts(self._pooled(lambda r: self.counts(da, self.r2[r], "DR")))
        d2r1 = normalize_counts(self._pooled(lambda r: self.counts(self.r1[r], db, "RD")))
        return dd, d1r2, d2r1

    def xi(self, da: PointSet, db: PointSet) -> Tuple[np.ndarray, Tuple[PairCountHistogram, ...]]:
        dd, d1r2, d2r1 = self.data_counts(da, db)
        hists = (dd, d1r2, d2r1, self.rr)
        return compute_estimators(*hists, estimators=self.cfg.estimators), hists

    def meta(self, a: Catalog, b: Catalog) -> dict:
        return {
            "labels": [a.label, b.label],
            "n_data": [len(self.da), len(self.db)],
            "estimators": list(self.cfg.estimators),
            "n_bins": self.bins.n_bins,
            "separation": self.scale.to_dict(),
            "transform": self.transform.config,
            "transform_hash": self.transform.hash,
            "axis_meta": [self.da.axis_meta, self.db.axis_meta],
            "randoms": {
                "generator": generator_id(),
                "multiplier": self.cfg.random_multiplier,
                "realizations": self.cfg.realizations,
                "a": [s.to_dict() for s in self.random_specs["a"]],
                "b": [s.to_dict() for s in self.random_specs["b"]],
            },
            "seed": self.cfg.seed,
            "kernel": self.cfg.kernel,
            "refine": self.cfg.refine,
        }


class XiResult:
    """Per-bin values of the cross-correlation estimators.

    Wraps an :class:`xarray.Dataset` with dimensions ``estimator`` and ``bin``
    holding ``xi``, the bootstrap ``sigma``, the number of bootstrap
    replicates contributing to each sigma (``n_boot``) and, optionally, the
    fitted power law ``fitted``. Undefined bins hold NaN in ``xi``.

    Args:
        ds (:class:`xarray.Dataset`):
            Dataset as built by :meth:`from_arrays`.
        meta (dict):
            Provenance: labels, seeds, bin grid, ``r_max``, estimator ids.
    """

    def __init__(self, ds: xr.Dataset, meta: dict):
        self.ds = ds
        self.meta = meta

    @classmethod
    def from_arrays(
        cls,
        bins: BinGrid,
        estimators: Sequence[int],
        xi: np.ndarray,
        meta: dict,
        sigma: Optional[np.ndarray] = None,
        n_boot: Optional[np.ndarray] = None,
    ) -> "XiResult":
        shape = (len(estimators), bins.n_bins)
        if sigma is None:
            sigma = np.full(shape, np.nan)
        if n_boot is None:
            n_boot = np.zeros(shape, dtype=np.int64)
        ds = xr.Dataset(
            {
                "xi": (("estimator", "bin"), np.asarray(xi, dtype=float)),
                "sigma": (("estimator", "bin"), np.asarray(sigma, dtype=float)),
                "n_boot": (("estimator", "bin"), np.asarray(n_boot, dtype=np.int64)),
                "fitted": (("estimator", "bin"), np.full(shape, np.nan)),
            },
            coords={
                "estimator": list(estimators),
                "bin": np.arange(bins.n_bins),
                "bin_lo": ("bin", np.asarray(bins.lo)),
                "bin_hi": ("bin", np.asarray(bins.hi)),
                "r_center": ("bin", bins.centers),
            },
        )
        return cls(ds, meta)

    @property
    def estimators(self) -> List[int]:
        return [int(e) for e in self.ds["estimator"].values]

    @property
    def bin_centers(self) -> np.ndarray:
        return self.ds["r_center"].values

    @property
    def bins(self) -> BinGrid:
        return BinGrid(self.ds.sizes["bin"])

    def xi(self, estimator: int) -> np.ndarray:
        return self.ds["xi"].sel(estimator=estimator).values

    def sigma(self, estimator: int) -> np.ndarray:
        return self.ds["sigma"].sel(estimator=estimator).values

    def defined(self, estimator: int) -> np.ndarray:
        return np.isfinite(self.xi(estimator))

    def undefined_bins(self, estimator: int) -> List[int]:
        """Bins where a denominator of ``estimator`` vanished."""
        return [int(k) for k in np.flatnonzero(~self.defined(estimator))]

    def with_sigma(self, sigma: np.ndarray, n_boot: np.ndarray, boot_meta: dict) -> "XiResult":
        ds = self.ds.copy(deep=True)
        ds["sigma"] = (("estimator", "bin"), np.asarray(sigma, dtype=float))
        ds["n_boot"] = (("estimator", "bin"), np.asarray(n_boot, dtype=np.int64))
        meta = deepcopy(self.meta)
        meta["bootstrap"] = boot_meta
        return XiResult(ds, meta)

    def with_fit(self, estimator: int, amplitude: float, fit_meta: Optional[dict] = None) -> "XiResult":
        """Copy with the fitted ``amplitude / r_center`` stored for ``estimator``."""
        ds = self.ds.copy(deep=True)
        ds["fitted"].loc[{"estimator": estimator}] = amplitude / self.bin_centers
        meta = deepcopy(self.meta)
        meta.setdefault("fits", {})[str(estimator)] = fit_meta or {"A": amplitude}
        return XiResult(ds, meta)

    def to_dataframe(self) -> pd.DataFrame:
        """Plot-ready table: ``bin_lo, bin_hi, r_center`` then per estimator
        ``xi_e, sigma_e, defined_e`` and ``fitted_e`` where a fit is stored."""
        df = pd.DataFrame(
            {
                "bin_lo": self.ds["bin_lo"].values,
                "bin_hi": self.ds["bin_hi"].values,
                "r_center": self.bin_centers,
            }
        )
        for e in self.estimators:
            df[f"xi_{e}"] = self.xi(e)
        for e in self.estimators:
            df[f"sigma_{e}"] = self.sigma(e)
        for e in self.estimators:
            df[f"defined_{e}"] = self.defined(e).astype(int)
        for e in self.estimators:
            fitted = self.ds["fitted"].sel(estimator=e).values
            if np.isfinite(fitted).any():
                df[f"fitted_{e}"] = fitted
        return df

    def to_csv(self, path: Union[str, os.PathLike]) -> str:
        return write_csv(path, self.to_dataframe())

    def save(self, path: Union[str, os.PathLike]) -> str:
        """Write the CSV to ``path`` and the metadata to a ``.json`` sidecar."""
        path = os.fspath(path)
        self.to_csv(path)
        write_json(os.path.splitext(path)[0] + ".json", {"xi_result": self.meta})
        return path

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "XiResult":
        """Read a CSV written by :meth:`save` (and its sidecar, if present)."""
        path = os.fspath(path)
        df = pd.read_csv(path, float_precision="round_trip")
        estimators = sorted(int(c.split("_")[1]) for c in df.columns if c.startswith("xi_"))
        bins = BinGrid(len(df))
        xi = np.stack([df[f"xi_{e}"].to_numpy(dtype=float) for e in estimators])
        sigma = np.stack(
            [
                df[f"sigma_{e}"].to_numpy(dtype=float)
                if f"sigma_{e}" in df
                else np.full(len(df), np.nan)
                for e in estimators
            ]
        )
        meta = {}
        sidecar = os.path.splitext(path)[0] + ".json"
        if os.path.exists(sidecar):
            with open(sidecar, "r", encoding="utf-8") as f:
                meta = json.load(f).get("xi_result", {})
        result = cls.from_arrays(bins, estimators, xi, meta, sigma=sigma)
        result.ds = result.ds.assign_coords(
            r_center=("bin", df["r_center"].to_numpy(dtype=float)),
            bin_lo=("bin", df["bin_lo"].to_numpy(dtype=float)),
            bin_hi=("bin", df["bin_hi"].to_numpy(dtype=float)),
        )
        return result

    def __str__(self):
        return f"XiResult(labels={self.meta.get('labels')})\n{self.to_dataframe()}"

    __repr__ = __str__


def _bootstrap(
    parts: _FixedParts,
    n_reps: int,
    seed: int,
    progress_bar: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    n_est = len(parts.cfg.estimators)
    reps = np.full((n_reps, n_est, parts.bins.n_bins), np.nan)
    n_a, n_b = len(parts.da), len(parts.db)
    for rep in tqdm(range(n_reps), disable=not progress_bar, desc="bootstrap"):
        rng = make_rng(replicate_seed(seed, rep))
        da = parts.da.take(rng.integers(0, n_a, n_a))
        db = da if parts.same else parts.db.take(rng.integers(0, n_b, n_b))
        reps[rep], _ = parts.xi(da, db)

    finite = np.isfinite(reps)
    n_boot = finite.sum(axis=0)
    sigma = np.full((n_est, parts.bins.n_bins), np.nan)
    ok = n_boot >= 2
    for e, k in zip(*np.nonzero(ok)):
        sigma[e, k] = np.std(reps[finite[:, e, k], e, k], ddof=1)
    return sigma, n_boot


def estimate_xi(
    a: Catalog,
    b: Catalog,
    cfg: CorrelationConfig,
    verbose: bool = False,
    progress_bar: bool = False,
) -> XiResult:
    """Cross-correlation estimators between two catalogs.

    Maps both catalogs into feature space with a transform fitted to their
    union, draws random catalogs R1 over the ranges of ``a`` and R2 over the
    ranges of ``b``, counts the four pair kinds D1D2, D1R2, D2R1 and R1R2,
    normalises them and evaluates the selected estimators. If
    ``cfg.bootstrap_reps > 0``, bootstrap errors are attached.

    Args:
        a (:class:`~.data.catalog.Catalog`): First data catalog.
        b (:class:`~.data.catalog.Catalog`): Second data catalog.
        cfg (:class:`CorrelationConfig`): Analysis settings.
        verbose (bool, optional): Print progress messages. Defaults to False.
        progress_bar (bool, optional): Show a bootstrap progress bar. Defaults to False.

    Returns:
        :class:`XiResult`
    """
    parts = _FixedParts(a, b, cfg, verbose=verbose)
    xi, hists = parts.xi(parts.da, parts.db)
    if verbose:
        print(f"Pair counts for {a.label} x {b.label} with {parts.scale}")
    meta = parts.meta(a, b)
    meta["undefined_bins"] = {
        str(e): [int(k) for k in np.flatnonzero(~np.isfinite(row))]
        for e, row in zip(cfg.estimators, xi)
    }
    meta["empty_dd_bins"] = [int(k) for k in np.flatnonzero(hists[0].counts == 0)]
    result = XiResult.from_arrays(parts.bins, cfg.estimators, xi, meta)
    if cfg.bootstrap_reps:
        sigma, n_boot = _bootstrap(parts, cfg.bootstrap_reps, cfg.boot_seed, progress_bar)
        result = result.with_sigma(
            sigma, n_boot, {"n_reps": cfg.bootstrap_reps, "seed": cfg.boot_seed}
        )
    return result


def bootstrap_errors(
    a: Catalog,
    b: Catalog,
    cfg: CorrelationConfig,
    n_reps: int,
    seed: int,
    progress_bar: bool = False,
) -> xr.Dataset:
    """Bootstrap standard deviations of the estimators.

    Each replicate resamples the records of ``a`` and of ``b`` independently
    with replacement (same sizes) and recomputes the estimators against the
    random catalogs, scale and transform of the original analysis, which stay
    fixed. Replicate ``i`` draws from a stream derived from ``(seed, i)``, so
    results do not depend on execution order.

    Args:
        n_reps (int): Number of replicates. Must be >= 2.
        seed (int): Seed of the replicate streams.

    Returns:
        :class:`xarray.Dataset`: ``sigma`` (NaN for bins defined in fewer than
        two replicates) and ``n_boot`` (contributing replicates), both with
        dimensions ``estimator`` and ``bin``.
    """
    if int(n_reps) < 2:
        raise ValueError(f"n_reps must be >= 2, got {n_reps}")
    parts = _FixedParts(a, b, cfg)
    sigma, n_boot = _bootstrap(parts, int(n_reps), seed, progress_bar)
    return xr.Dataset(
        {
            "sigma": (("estimator", "bin"), sigma),
            "n_boot": (("estimator", "bin"), n_boot),
        },
        coords={"estimator": list(cfg.estimators), "bin": np.arange(cfg.n_bins)},
    )
