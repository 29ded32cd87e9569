import json
import os
import pprint
from copy import deepcopy
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from paramcorr.data.catalog import AXES, Catalog
from paramcorr.data.utils import stable_hash
from paramcorr.errors import TransformError


class AxisTransformSpec:
    """Per-axis map from catalog columns into the metric feature space.

    Each axis first goes through a scale (``"identity"``, ``"log10"`` or
    ``"exp10"``) and is then optionally min-max rescaled to [0, 1]. The
    rescaling bounds can be given explicitly or inferred from data with
    :meth:`fit`; catalogs that are compared with each other must share
    the same bounds, otherwise their relative positions are lost.

    Masses are stored as log10 solar masses, so ``"identity"`` on the mass
    axis means distances in log-mass and ``"exp10"`` means distances in
    linear solar masses.

    Args:
        folder (str, optional):
            Folder to load a saved transform config from. If given, all
            other arguments are ignored. Defaults to None.
        scales (dict, optional):
            Map from axis name to scale. Defaults to identity on both axes.
        rescale (dict, optional):
            Map from axis name to whether to min-max rescale. Defaults to
            True on both axes.
        bounds (dict, optional):
            Map from axis name to ``(min, max)`` of the *scaled* axis used for
            rescaling. Axes without bounds are rescaled with the bounds of
            whatever catalog is being transformed. Defaults to None.
        axes (Sequence[str], optional):
            Catalog columns making up the feature space. Defaults to
            ``("mass", "size")``.
    """

    config_fname = "axis_transform_config.json"
    valid_scales = ["identity", "log10", "exp10"]

    def __init__(
        self,
        folder: Union[str, None] = None,
        scales: Optional[Dict[str, str]] = None,
        rescale: Optional[Dict[str, bool]] = None,
        bounds: Optional[Dict[str, Tuple[float, float]]] = None,
        axes: Sequence[str] = tuple(AXES),
    ):
        if folder is not None:
            fpath = os.path.join(folder, self.config_fname)
            if not os.path.exists(fpath):
                raise FileNotFoundError(
                    f"Could not find AxisTransformSpec config file {fpath}"
                )
            with open(fpath, "r") as f:
                self.config = json.load(f)
        else:
            axes = list(axes)
            scales = {**{axis: "identity" for axis in axes}, **(scales or {})}
            rescale = {**{axis: True for axis in axes}, **(rescale or {})}
            bounds = bounds or {}
            self.config = {
                "axes": axes,
                "scales": {axis: scales[axis] for axis in axes},
                "rescale": {axis: bool(rescale[axis]) for axis in axes},
                "bounds": {
                    axis: [float(bounds[axis][0]), float(bounds[axis][1])]
                    for axis in axes
                    if axis in bounds
                },
            }
        self._validate()

    @classmethod
    def from_dict(cls, d: dict) -> "AxisTransformSpec":
        """Build from a config-file style dict ``{axis: {"scale":..., "rescale":..., "bounds":...}}``."""
        axes = list(d.keys()) if d else list(AXES)
        return cls(
            scales={a: d[a].get("scale", "identity") for a in axes if a in d},
            rescale={a: d[a].get("rescale", True) for a in axes if a in d},
            bounds={a: tuple(d[a]["bounds"]) for a in axes if d.get(a, {}).get("bounds")},
            axes=axes,
        )

    def _validate(self):
        for axis in self.axes:
            scale = self.config["scales"][axis]
            if scale not in self.valid_scales:
                raise ValueError(
                    f"Scale {scale} not recognised for axis '{axis}'. "
                    f"Must be one of {self.valid_scales}"
                )
        for axis, (lo, hi) in self.config["bounds"].items():
            if not hi > lo:
                raise TransformError(
                    f"Rescale bounds for axis '{axis}' must satisfy max > min, got {(lo, hi)}"
                )

    @property
    def axes(self):
        return list(self.config["axes"])

    @property
    def hash(self) -> str:
        """Stable short hash of the transform config, used for provenance."""
        return stable_hash(self.config)[:16]

    def __str__(self):
        s = "AxisTransformSpec with config:\n"
        s += pprint.pformat(self.config)
        return s

    def __eq__(self, other):
        return isinstance(other, AxisTransformSpec) and self.config == other.config

    def save(self, folder: str):
        """Save config to JSON in ``folder``."""
        os.makedirs(folder, exist_ok=True)
        fpath = os.path.join(folder, self.config_fname)
        with open(fpath, "w") as f:
            json.dump(self.config, f, indent=4, sort_keys=False)

    def scale_values(self, values: np.ndarray, axis: str) -> np.ndarray:
        """Apply the scale (without rescaling) of ``axis`` to ``values``."""
        scale = self.config["scales"][axis]
        if scale == "identity":
            return np.asarray(values, dtype=float).copy()
        elif scale == "log10":
            if np.any(values <= 0):
                raise TransformError(
                    f"log10 scale on axis '{axis}' needs strictly positive values, "
                    f"got minimum {np.min(values)}"
                )
            return np.log10(values)
        else:
            with np.errstate(over="raise"):
                try:
                    return np.power(10.0, values)
                except FloatingPointError:
                    raise TransformError(f"exp10 scale overflows on axis '{axis}'")

    def fit(self, *catalogs: Catalog) -> "AxisTransformSpec":
        """Return a copy whose missing rescale bounds are inferred from ``catalogs``.

        Bounds are the per-axis min/max of the scaled values over the union
        of all catalogs. Axes with explicit bounds keep them.
        """
        new = deepcopy(self)
        for axis in self.axes:
            if not self.config["rescale"][axis] or axis in self.config["bounds"]:
                continue
            scaled = np.concatenate(
                [self.scale_values(c.values([axis])[:, 0], axis) for c in catalogs]
            )
            lo, hi = float(scaled.min()), float(scaled.max())
            if not hi > lo:
                raise TransformError(
                    f"Degenerate axis '{axis}' (max == min == {lo}) cannot be min-max rescaled"
                )
            new.config["bounds"][axis] = [lo, hi]
        return new

    def map_catalog(self, c: Catalog) -> np.ndarray:
        """Transform a catalog into an ``(N, n_axes)`` array of feature coordinates."""
        columns = []
        for axis in self.axes:
            x = self.scale_values(c.values([axis])[:, 0], axis)
            if self.config["rescale"][axis] and len(x) > 0:
                if axis in self.config["bounds"]:
                    lo, hi = self.config["bounds"][axis]
                else:
                    lo, hi = float(x.min()), float(x.max())
                    if not hi > lo:
                        raise TransformError(
                            f"Degenerate axis '{axis}' (max == min == {lo}) cannot be "
                            f"min-max rescaled"
                        )
                x = (x - lo) / (hi - lo)
            columns.append(x)
        points = np.stack(columns, axis=1)
        if not np.all(np.isfinite(points)):
            raise TransformError("Transform produced non-finite coordinates")
        return points


class PointSet:
    """Immutable set of feature-space points with provenance.

    Args:
        points (:class:`numpy:numpy.ndarray`):
            Array of shape ``(N, d)``. Copied and made read-only.
        provenance (dict):
            Where the points came from, e.g. catalog label and transform hash.
        axis_names (Sequence[str], optional):
            Names of the ``d`` axes. Defaults to ``("x1", ..., "xd")``.
    """

    def __init__(self, points, provenance: dict, axis_names: Optional[Sequence[str]] = None):
        points = np.array(points, dtype=float, copy=True)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2:
            raise ValueError(f"points must have shape (N, d), got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("All PointSet coordinates must be finite")
        points.setflags(write=False)
        self.points = points
        self.provenance = dict(provenance)
        if axis_names is None:
            axis_names = [f"x{i + 1}" for i in range(points.shape[1])]
        self.axis_names = list(axis_names)

    @property
    def label(self) -> str:
        return str(self.provenance.get("label", ""))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def ranges(self) -> np.ndarray:
        """Array of shape ``(d, 2)`` with per-axis ``[min, max]``."""
        if len(self) == 0:
            raise ValueError("Empty PointSet has no ranges")
        return np.stack([self.points.min(axis=0), self.points.max(axis=0)], axis=1)

    @property
    def axis_meta(self) -> Dict[str, Tuple[float, float]]:
        """Per-axis ``(min, max)`` in feature space, keyed by axis name."""
        if len(self) == 0:
            return {}
        return {name: (float(lo), float(hi)) for name, (lo, hi) in zip(self.axis_names, self.ranges)}

    def take(self, index) -> "PointSet":
        """PointSet made of the points at ``index`` (e.g. a bootstrap resample)."""
        return PointSet(self.points[np.asarray(index)], self.provenance, self.axis_names)

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, PointSet)
            and self.provenance == other.provenance
            and np.array_equal(self.points, other.points)
        )

    def __hash__(self):
        return id(self)

    def __str__(self):
        return f"PointSet(n={len(self)}, d={self.dim}, provenance={self.provenance})"

    __repr__ = __str__


def to_point_set(c: Catalog, t: AxisTransformSpec) -> PointSet:
    """Map a catalog into feature space, one point per record in record order.

    Raises:
        TransformError: For non-positive values under log10 or a degenerate
            axis under min-max rescaling.
    """
    points = t.map_catalog(c)
    return PointSet(
        points,
        provenance={"label": c.label, "transform_hash": t.hash},
        axis_names=t.axes,
    )
