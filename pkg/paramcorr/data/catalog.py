import os
import pathlib
import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from plum import dispatch
from scipy import stats

from paramcorr.data.utils import write_csv
from paramcorr.errors import (
    CatalogSchemaError,
    EmptyCatalogError,
    MissingRedshiftError,
)

COLUMNS = ["mass", "size", "redshift", "source", "component"]
"""Fixed column order of catalogs written to CSV."""

AXES = ["mass", "size"]

COMPONENTS = ("inner", "intermediate", "outer")


@dataclass(frozen=True)
class GalaxyRecord:
    """A single galaxy (or galaxy component) in the mass-size plane.

    Args:
        mass (float):
            Stellar mass as ``log10(M*/M_sun)``.
        size (float):
            Effective radius ``R_e`` in kpc. Must be positive.
        redshift (float, optional):
            Redshift ``z >= 0``. ``None`` for nearby components.
        source (str):
            Free-text provenance label.
        component (str, optional):
            One of ``"inner"``, ``"intermediate"``, ``"outer"`` for nearby
            early-type galaxy components.
    """

    mass: float
    size: float
    redshift: Optional[float] = None
    source: str = ""
    component: Optional[str] = None

    def __post_init__(self):
        problem = _record_problem(self.mass, self.size, self.redshift, self.component)
        if problem is not None:
            raise ValueError(f"Invalid GalaxyRecord {self}: {problem}")


def _record_problem(mass, size, redshift, component) -> Optional[str]:
    if not np.isfinite(mass):
        return "mass must be finite"
    if not (np.isfinite(size) and size > 0):
        return "size must be finite and > 0"
    if redshift is not None and not (np.isfinite(redshift) and redshift >= 0):
        return "redshift must be finite and >= 0"
    if component is not None and component not in COMPONENTS:
        return f"component must be one of {COMPONENTS}"
    return None


class Catalog:
    """Immutable, labelled collection of :class:`GalaxyRecord` rows.

    Records are held in a :class:`pandas.DataFrame` with columns
    ``mass, size, redshift, source, component``. Missing redshifts and
    components are stored as NaN / None.

    ``axis_meta`` holds the observed per-axis ``(min, max)`` of the raw
    catalog values. The ranges after an :class:`~.transform.AxisTransformSpec`
    are on the mapped point set, ``to_point_set(c, t).axis_meta``.

    Args:
        data (:class:`pandas.DataFrame` | Iterable[:class:`GalaxyRecord`]):
            Records, either as a DataFrame with the catalog columns or as
            :class:`GalaxyRecord` objects. DataFrame rows are assumed valid.
        label (str):
            Identifier of the catalog, e.g. ``"dataset-1"``.
        n_rejected (int, optional):
            Number of input rows rejected while loading. Defaults to 0.
    """

    def __init__(
        self,
        data: Union[pd.DataFrame, Iterable[GalaxyRecord]],
        label: str,
        n_rejected: int = 0,
    ):
        if isinstance(data, pd.DataFrame):
            df = data.reindex(columns=COLUMNS).copy()
        else:
            df = pd.DataFrame(
                [
                    (r.mass, r.size, r.redshift, r.source, r.component)
                    for r in data
                ],
                columns=COLUMNS,
            )
        df["mass"] = df["mass"].astype(float)
        df["size"] = df["size"].astype(float)
        df["redshift"] = df["redshift"].astype(float)
        df["source"] = df["source"].fillna(label).astype(str)
        df["component"] = df["component"].astype(object).where(
            df["component"].notna(), None
        )
        self._df = df.reset_index(drop=True)
        self.label = label
        self.n_rejected = int(n_rejected)
        self.axis_meta = self._compute_axis_meta()

    def _compute_axis_meta(self) -> Dict[str, Tuple[float, float]]:
        if len(self._df) == 0:
            return {}
        return {
            axis: (float(self._df[axis].min()), float(self._df[axis].max()))
            for axis in AXES
        }

    @classmethod
    def from_records(cls, records: Iterable[GalaxyRecord], label: str) -> "Catalog":
        return cls(list(records), label)

    @property
    def df(self) -> pd.DataFrame:
        """Copy of the underlying records table."""
        return self._df.copy()

    @property
    def records(self) -> List[GalaxyRecord]:
        """Records as :class:`GalaxyRecord` objects, in order."""
        return [
            GalaxyRecord(
                mass=row.mass,
                size=row.size,
                redshift=None if np.isnan(row.redshift) else row.redshift,
                source=row.source,
                component=row.component,
            )
            for row in self._df.itertuples(index=False)
        ]

    def values(self, axes: Sequence[str] = AXES) -> np.ndarray:
        """Array of shape ``(N, len(axes))`` holding the requested columns."""
        return self._df[list(axes)].to_numpy(dtype=float, copy=True)

    @property
    def has_redshift(self) -> np.ndarray:
        return self._df["redshift"].notna().to_numpy()

    def subset(self, mask_or_index, label: Optional[str] = None) -> "Catalog":
        """Catalog built from a boolean mask or integer index array."""
        idx = np.asarray(mask_or_index)
        if idx.dtype == bool:
            df = self._df[idx]
        else:
            df = self._df.iloc[idx]
        return Catalog(df, label if label is not None else self.label)

    def __len__(self):
        return len(self._df)

    def __str__(self):
        return f"Catalog('{self.label}', n={len(self)}, axis_meta={self.axis_meta})"

    __repr__ = __str__

    def to_csv(self, path: Union[str, os.PathLike]) -> str:
        """Write records as CSV in the fixed column order with 17 significant digits."""
        return write_csv(path, self._df[COLUMNS])


def _infer_delimiter(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
    return "\t" if "\t" in header else ","


@dispatch
def load_catalog(
    path: Union[str, pathlib.Path],
    schema: Optional[dict] = None,
    label: Optional[str] = None,
    delimiter: Optional[str] = None,
    verbose: bool = False,
) -> Catalog:
    """Load a catalog from comma- or tab-delimited UTF-8 text with one header row.

    Args:
        path (str | :class:`pathlib.Path`):
            Path to the file.
        schema (dict, optional):
            Map from catalog fields (``mass``, ``size`` and optionally
            ``redshift``, ``component``, ``source``) to column names in the
            file. Defaults to identity names.
        label (str, optional):
            Catalog label. Defaults to the file stem.
        delimiter (str, optional):
            Column delimiter. Inferred from the header row if None.
        verbose (bool, optional):
            Whether to print a loading summary. Defaults to False.

    Returns:
        :class:`Catalog`

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        CatalogSchemaError: If a mandatory column is missing.
        EmptyCatalogError: If no row is valid.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"Could not find catalog file {path}")
    if delimiter is None:
        delimiter = _infer_delimiter(path)
    df = pd.read_csv(path, sep=delimiter, float_precision="round_trip", encoding="utf-8")
    if label is None:
        label = pathlib.Path(path).stem
    if verbose:
        print(f"Read {len(df)} rows from {path}")
    return load_catalog(df, schema, label, verbose=verbose)


@dispatch
def load_catalog(  # noqa: F811
    df: pd.DataFrame,
    schema: Optional[dict] = None,
    label: Optional[str] = None,
    verbose: bool = False,
) -> Catalog:
    """Build a catalog from an already-read table, rejecting invalid rows."""
    schema = {**{axis: axis for axis in AXES}, **(schema or {})}
    if label is None:
        label = "catalog"
    for field in AXES:
        if schema[field] not in df.columns:
            raise CatalogSchemaError(schema[field], df.columns)
    optional = {}
    for field in ("redshift", "component", "source"):
        column = schema.get(field, field)
        if column in df.columns:
            optional[field] = column
        elif field in schema:
            raise CatalogSchemaError(column, df.columns)

    mass = pd.to_numeric(df[schema["mass"]], errors="coerce").to_numpy(dtype=float)
    size = pd.to_numeric(df[schema["size"]], errors="coerce").to_numpy(dtype=float)
    if "redshift" in optional:
        redshift = pd.to_numeric(df[optional["redshift"]], errors="coerce").to_numpy(
            dtype=float
        )
    else:
        redshift = np.full(len(df), np.nan)
    if "component" in optional:
        component = (
            df[optional["component"]]
            .astype(object)
            .where(df[optional["component"]].notna(), None)
            .map(lambda c: c.strip().lower() if isinstance(c, str) else c)
            .to_numpy()
        )
    else:
        component = np.full(len(df), None, dtype=object)
    if "source" in optional:
        source = df[optional["source"]].fillna(label).astype(str).to_numpy()
    else:
        source = np.full(len(df), label, dtype=object)

    valid = np.isfinite(mass) & np.isfinite(size) & (size > 0)
    # NaN redshift means "absent"; present redshifts must be >= 0
    z_present = ~np.isnan(redshift)
    valid &= ~z_present | (np.isfinite(redshift) & (redshift >= 0))
    valid &= np.array([c is None or c in COMPONENTS for c in component], dtype=bool)

    n_rejected = int((~valid).sum())
    if n_rejected > 0:
        warnings.warn(
            f"Rejected {n_rejected} of {len(df)} rows of catalog '{label}' "
            f"(non-finite mass, non-positive size, negative redshift or unknown component).",
            UserWarning,
        )
    if not valid.any():
        raise EmptyCatalogError(label, n_rejected)

    out = pd.DataFrame(
        {
            "mass": mass[valid],
            "size": size[valid],
            "redshift": redshift[valid],
            "source": source[valid],
            "component": component[valid],
        }
    )
    if verbose:
        print(f"Catalog '{label}': {len(out)} valid rows, {n_rejected} rejected")
    return Catalog(out, label, n_rejected=n_rejected)


def _format_bound(x: float) -> str:
    return f"{x:g}"


def select_redshift_bin(c: Catalog, z_lo: float, z_hi: float) -> Catalog:
    """Select records with ``z_lo < z <= z_hi``.

    Contiguous bins ``(z0, z1], (z1, z2], ...`` therefore partition the
    records: each record lands in exactly one bin.

    Raises:
        ValueError: If ``z_lo >= z_hi``.
        MissingRedshiftError: If any record has no redshift.
    """
    if not z_lo < z_hi:
        raise ValueError(f"Redshift bin needs z_lo < z_hi, got ({z_lo}, {z_hi}]")
    n_missing = int((~c.has_redshift).sum())
    if n_missing > 0:
        raise MissingRedshiftError(c.label, n_missing)
    z = c.df["redshift"].to_numpy()
    mask = (z > z_lo) & (z <= z_hi)
    return c.subset(mask, label=f"{c.label}({_format_bound(z_lo)},{_format_bound(z_hi)}]")


def filter_mass_floor(c: Catalog, floor: float) -> Catalog:
    """Keep records with ``mass >= floor`` (``floor`` in log10 solar masses)."""
    mask = c.df["mass"].to_numpy() >= floor
    return c.subset(mask)


def merge_catalogs(catalogs: Sequence[Catalog], label: str) -> Catalog:
    """Concatenate catalogs in order. Each record keeps its ``source``."""
    if len(catalogs) == 0:
        raise ValueError("Need at least one catalog to merge")
    df = pd.concat([c.df for c in catalogs], ignore_index=True)
    return Catalog(df, label, n_rejected=sum(c.n_rejected for c in catalogs))


def mass_size_correlation(c: Catalog) -> dict:
    """Pearson correlation between mass and size with its two-sided p-value."""
    if len(c) < 3:
        raise ValueError(
            f"Need at least 3 records for a correlation, catalog '{c.label}' has {len(c)}"
        )
    r, p = stats.pearsonr(c.df["mass"], c.df["size"])
    return {"label": c.label, "r": float(r), "p_value": float(p), "n": len(c)}


def summarize_catalog(c: Catalog) -> dict:
    """Size, medians and ranges of a catalog."""
    df = c.df
    z = df["redshift"].dropna()
    return {
        "label": c.label,
        "n": len(c),
        "median_mass": float(df["mass"].median()) if len(c) else None,
        "median_size": float(df["size"].median()) if len(c) else None,
        "mass_range": list(c.axis_meta.get("mass", (None, None))),
        "size_range": list(c.axis_meta.get("size", (None, None))),
        "redshift_range": [float(z.min()), float(z.max())] if len(z) else None,
        "n_rejected": c.n_rejected,
    }
