import json
import os
import pprint
from copy import deepcopy
from typing import List, Optional, Sequence

from paramcorr.config import (
    DEFAULT_FIT_ALPHA,
    DEFAULT_N_BINS,
    DEFAULT_N_PERMS,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_RANKTEST_ALPHA,
    JSON_SCHEMA_VERSION,
    MIN_N_PERMS,
    OUTPUT_DIR_ENV_VAR,
)
from paramcorr.correlation.estimators import ESTIMATORS, CorrelationConfig
from paramcorr.data.transform import AxisTransformSpec
from paramcorr.data.utils import stable_hash, to_json_text
from paramcorr.errors import ConfigError

ROLES = ("component", "survey")

DEFAULTS = {
    "schema_version": JSON_SCHEMA_VERSION,
    "output_dir": None,
    "catalogs": [],
    "redshift_bins": [[0.5, 0.75], [0.75, 1.0], [1.0, 1.4], [1.4, 2.0], [2.0, 2.7]],
    "mass_floor": None,
    "transform": {
        "mass": {"scale": "identity", "rescale": True},
        "size": {"scale": "identity", "rescale": True},
    },
    "bins": {"n_bins": DEFAULT_N_BINS},
    "estimators": list(ESTIMATORS),
    "randoms": {"multiplier": 1.0, "realizations": 1},
    "separation": {"source": "union", "r_max": None},
    "bootstrap": {"n_reps": 100},
    "fit": {"alpha": DEFAULT_FIT_ALPHA, "estimators": list(ESTIMATORS), "weighted": False},
    "ranktest": {
        "reference": None,
        "compare": None,
        "variables": ["mass", "size"],
        "alpha": DEFAULT_RANKTEST_ALPHA,
        "method": "auto",
        "n_perms": DEFAULT_N_PERMS,
        "design": "reference",
    },
    "kernel": "accelerated",
    "refine": 1,
    "n_workers": 1,
}
"""Default analysis config. ``seed`` has no default and must always be given."""


def _merge(base: dict, update: dict) -> dict:
    out = deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = deepcopy(value)
    return out


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


class AnalysisConfig:
    """Declarative description of an end-to-end analysis.

    The config is a JSON document; missing keys take the values in
    :data:`DEFAULTS`. Catalog paths are resolved relative to the directory
    of the config file.

    Args:
        config (dict):
            Config tree.
        base_dir (str, optional):
            Directory relative catalog paths are resolved against. Defaults
            to the current working directory.
    """

    config_fname = "analysis_config.json"

    def __init__(self, config: dict, base_dir: Optional[str] = None):
        self.config = _merge(DEFAULTS, config)
        self.base_dir = base_dir if base_dir is not None else os.getcwd()

    @classmethod
    def from_file(cls, path: str) -> "AnalysisConfig":
        if not os.path.exists(path):
            raise FileNotFoundError(f"Could not find config file {path}")
        with open(path, "r", encoding="utf-8") as f:
            try:
                config = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError([f"{path} is not valid JSON: {e}"])
        return cls(config, base_dir=os.path.dirname(os.path.abspath(path)))

    def apply_overrides(self, overrides: Optional[Sequence[str]]) -> "AnalysisConfig":
        """Override keys with ``section.key=value`` strings.

        Values are parsed as JSON where possible (numbers, booleans, lists),
        otherwise kept as strings.
        """
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError([f"Override '{item}' is not of the form key.sub=value"])
            key, value = item.split("=", 1)
            node = self.config
            parts = key.strip().split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ConfigError([f"Override '{item}': '{part}' is not a section"])
            node[parts[-1]] = _parse_value(value)
        return self

    def __getitem__(self, key):
        return self.config[key]

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    @property
    def hash(self) -> str:
        return stable_hash(self.config)

    def resolve_path(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def output_dir(self, override: Optional[str] = None) -> str:
        """Output directory: argument, then config, then ``$PARAMCORR_OUTPUT_DIR``."""
        return (
            override
            or self.config.get("output_dir")
            or os.environ.get(OUTPUT_DIR_ENV_VAR)
            or DEFAULT_OUTPUT_DIR
        )

    def catalogs_with_role(self, role: str) -> List[dict]:
        return [c for c in self.config["catalogs"] if c.get("role", "survey") == role]

    def transform(self) -> AxisTransformSpec:
        return AxisTransformSpec.from_dict(self.config["transform"])

    def correlation_config(self, seed: int) -> CorrelationConfig:
        sep = self.config["separation"]
        return CorrelationConfig(
            seed=seed,
            transform=self.transform(),
            n_bins=self.config["bins"]["n_bins"],
            estimators=self.config["estimators"],
            random_multiplier=self.config["randoms"]["multiplier"],
            realizations=self.config["randoms"]["realizations"],
            separation=sep["source"],
            r_max=sep.get("r_max"),
            bootstrap_reps=self.config["bootstrap"]["n_reps"],
            kernel=self.config["kernel"],
            refine=self.config["refine"],
        )

    def problems(self, check_files: bool = True) -> List[str]:
        """Every problem found in the config (empty when valid)."""
        c = self.config
        problems = []
        seed = c.get("seed")
        if seed is None:
            problems.append("'seed' is mandatory")
        elif not _is_int(seed) or not 0 <= seed < 2**64:
            problems.append(f"'seed' must be an unsigned 64-bit integer, got {seed!r}")

        def section(name: str) -> dict:
            value = c.get(name)
            if isinstance(value, dict):
                return value
            problems.append(f"'{name}' must be a JSON object, got {value!r}")
            return {}

        catalogs = c.get("catalogs")
        if not isinstance(catalogs, list):
            problems.append(f"'catalogs' must be a list, got {catalogs!r}")
            catalogs = []
        labels = []
        for i, cat in enumerate(catalogs):
            if not isinstance(cat, dict) or not isinstance(cat.get("path"), str):
                problems.append(f"catalogs[{i}] must be an object with a 'path' string")
                continue
            labels.append(cat.get("label") or os.path.splitext(os.path.basename(cat["path"]))[0])
            if cat.get("role", "survey") not in ROLES:
                problems.append(f"catalogs[{i}].role must be one of {ROLES}, got {cat.get('role')!r}")
            if check_files and not os.path.exists(self.resolve_path(cat["path"])):
                problems.append(f"catalogs[{i}]: file {self.resolve_path(cat['path'])} does not exist")
        duplicates = sorted({lab for lab in labels if labels.count(lab) > 1})
        if duplicates:
            problems.append(f"catalog labels must be unique, duplicated: {duplicates}")

        z_bins = c.get("redshift_bins")
        if not isinstance(z_bins, list):
            problems.append(f"'redshift_bins' must be a list, got {z_bins!r}")
            z_bins = []
        for i, z in enumerate(z_bins):
            if not (
                isinstance(z, (list, tuple))
                and len(z) == 2
                and all(_is_number(v) for v in z)
                and z[0] < z[1]
            ):
                problems.append(f"redshift_bins[{i}] must be [z_lo, z_hi] with z_lo < z_hi, got {z}")
        if c.get("mass_floor") is not None and not _is_number(c["mass_floor"]):
            problems.append(f"mass_floor must be a number or null, got {c['mass_floor']!r}")

        n_bins = section("bins").get("n_bins")
        if not _is_int(n_bins) or n_bins < 1:
            problems.append(f"bins.n_bins must be a positive integer, got {n_bins!r}")
        estimators = c.get("estimators")
        if (
            not isinstance(estimators, list)
            or not estimators
            or any(not _is_int(e) or e not in ESTIMATORS for e in estimators)
        ):
            problems.append(f"estimators must be a non-empty subset of {list(ESTIMATORS)}")
            estimators = estimators if isinstance(estimators, list) else []
        fit = section("fit")
        fit_estimators = fit.get("estimators")
        if not isinstance(fit_estimators, list) or any(e not in estimators for e in fit_estimators):
            problems.append("fit.estimators must be a subset of estimators")
        if not _is_number(fit.get("alpha")) or not 0 < fit["alpha"] < 1:
            problems.append(f"fit.alpha must be a number in (0, 1), got {fit.get('alpha')!r}")
        if not isinstance(fit.get("weighted"), bool):
            problems.append(f"fit.weighted must be true or false, got {fit.get('weighted')!r}")

        randoms = section("randoms")
        if not _is_number(randoms.get("multiplier")) or not randoms["multiplier"] > 0:
            problems.append(f"randoms.multiplier must be positive, got {randoms.get('multiplier')!r}")
        if not _is_int(randoms.get("realizations")) or randoms["realizations"] < 1:
            problems.append(
                f"randoms.realizations must be a positive integer, got {randoms.get('realizations')!r}"
            )
        sep = section("separation")
        if sep.get("source") not in ("union", "data-data", "user"):
            problems.append("separation.source must be 'union', 'data-data' or 'user'")
        elif sep["source"] == "user" and not (_is_number(sep.get("r_max")) and sep["r_max"] > 0):
            problems.append("separation.r_max must be positive for source 'user'")
        n_reps = section("bootstrap").get("n_reps")
        if not _is_int(n_reps) or n_reps < 0 or n_reps == 1:
            problems.append(f"bootstrap.n_reps must be 0 or an integer >= 2, got {n_reps!r}")

        rt = section("ranktest")
        if not _is_number(rt.get("alpha")) or not 0 < rt["alpha"] < 1:
            problems.append(f"ranktest.alpha must be a number in (0, 1), got {rt.get('alpha')!r}")
        if rt.get("method") not in ("auto", "mckeon_f", "permutation"):
            problems.append("ranktest.method must be 'auto', 'mckeon_f' or 'permutation'")
        if not _is_int(rt.get("n_perms")) or rt["n_perms"] < MIN_N_PERMS:
            problems.append(f"ranktest.n_perms must be an integer >= {MIN_N_PERMS}, got {rt.get('n_perms')!r}")
        if rt.get("design") not in ("reference", "pairwise"):
            problems.append("ranktest.design must be 'reference' or 'pairwise'")

        if c.get("kernel") not in ("accelerated", "naive"):
            problems.append("kernel must be 'accelerated' or 'naive'")
        if not _is_int(c.get("refine")) or c["refine"] < 1:
            problems.append(f"refine must be a positive integer, got {c.get('refine')!r}")
        if not _is_int(c.get("n_workers")) or c["n_workers"] < 1:
            problems.append(f"n_workers must be a positive integer, got {c.get('n_workers')!r}")
        try:
            self.transform()
        except Exception as e:
            problems.append(f"transform: {e}")
        return problems

    def validate(self, check_files: bool = True) -> "AnalysisConfig":
        """Raise :class:`~.errors.ConfigError` listing every problem, if any."""
        problems = self.problems(check_files)
        if problems:
            raise ConfigError(problems)
        return self

    def to_json(self) -> str:
        return to_json_text(self.config)

    def save(self, folder: str):
        os.makedirs(folder, exist_ok=True)
        with open(os.path.join(folder, self.config_fname), "w", encoding="utf-8") as f:
            f.write(self.to_json())

    def __str__(self):
        return "AnalysisConfig:\n" + pprint.pformat(self.config)
