import os
import warnings
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from paramcorr.data.transform import PointSet
from paramcorr.data.utils import generator_id, make_rng, write_csv, write_json


class RandomSpec:
    """Specification of a uniform random comparison catalog.

    Args:
        n_points (int):
            Number of points to draw. Must be >= 1.
        seed (int):
            Unsigned 64-bit seed of the Philox stream.
        ranges (Sequence[Sequence[float]], optional):
            Per-axis ``[min, max]``. If None, the per-axis min/max of the
            source :class:`~.data.transform.PointSet` are used.
    """

    def __init__(
        self,
        n_points: int,
        seed: int,
        ranges: Optional[Sequence[Sequence[float]]] = None,
    ):
        if int(n_points) < 1:
            raise ValueError(f"n_points must be >= 1, got {n_points}")
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.n_points = int(n_points)
        self.seed = int(seed)
        if ranges is not None:
            ranges = np.asarray(ranges, dtype=float)
            if ranges.ndim != 2 or ranges.shape[1] != 2:
                raise ValueError(f"ranges must have shape (d, 2), got {ranges.shape}")
            if np.any(ranges[:, 1] < ranges[:, 0]):
                raise ValueError(f"ranges need max >= min on every axis, got {ranges.tolist()}")
        self.ranges = ranges

    @classmethod
    def for_catalog(
        cls,
        n_data: int,
        seed: int,
        multiplier: float = 1.0,
        ranges: Optional[Sequence[Sequence[float]]] = None,
    ) -> "RandomSpec":
        """Spec with ``round(multiplier * n_data)`` points (at least one)."""
        if multiplier <= 0:
            raise ValueError(f"multiplier must be positive, got {multiplier}")
        return cls(max(1, int(round(multiplier * n_data))), seed, ranges)

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "seed": self.seed,
            "ranges": None if self.ranges is None else self.ranges.tolist(),
            "generator": generator_id(),
        }

    def __str__(self):
        return f"RandomSpec({self.to_dict()})"


def generate_randoms(source: PointSet, spec: RandomSpec) -> PointSet:
    """Draw ``spec.n_points`` points uniformly over per-axis ranges.

    Each axis is drawn independently from its own range, axis by axis, from
    a single Philox stream seeded with ``spec.seed``, so identical
    ``(source, spec)`` always give identical points.

    Args:
        source (:class:`~.data.transform.PointSet`):
            Data point set whose ranges are used when ``spec.ranges`` is None.
        spec (:class:`RandomSpec`):
            Random catalog specification.

    Returns:
        :class:`~.data.transform.PointSet`
    """
    if len(source) == 0:
        raise ValueError("Cannot generate randoms for an empty source PointSet")
    ranges = source.ranges if spec.ranges is None else spec.ranges
    if ranges.shape[0] != source.dim:
        raise ValueError(
            f"ranges have {ranges.shape[0]} axes but source has {source.dim} dimensions"
        )
    degenerate = [
        source.axis_names[i] for i in range(ranges.shape[0]) if ranges[i, 0] == ranges[i, 1]
    ]
    if degenerate:
        warnings.warn(
            f"Degenerate range (min == max) on axes {degenerate}; random points are "
            f"constant along them.",
            UserWarning,
        )

    rng = make_rng(spec.seed)
    columns = []
    for lo, hi in ranges:
        x = lo + (hi - lo) * rng.random(spec.n_points)
        columns.append(np.clip(x, lo, hi))
    points = np.stack(columns, axis=1)

    provenance = {
        "label": f"randoms[{source.label}]",
        "source": source.label,
        "seed": spec.seed,
        "generator": generator_id(),
        "ranges": ranges.tolist(),
    }
    return PointSet(points, provenance, axis_names=source.axis_names)


def save_randoms(randoms: PointSet, path: Union[str, os.PathLike]) -> str:
    """Write a random point set as CSV plus a ``.json`` metadata sidecar.

    The CSV uses the axis names as columns; the sidecar records the seed,
    ranges and generator id.

    Returns:
        str: Path of the CSV file.
    """
    path = os.fspath(path)
    df = pd.DataFrame(randoms.points, columns=randoms.axis_names)
    write_csv(path, df)
    write_json(os.path.splitext(path)[0] + ".json", {"randoms": randoms.provenance, "n_points": len(randoms)})
    return path
