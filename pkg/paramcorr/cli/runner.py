import json
import multiprocessing
import os
import platform
import re
import sys
import traceback
import warnings
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from typing import Dict, List, Optional, Sequence

import numba
import numpy as np
import pandas as pd
import scipy
from tqdm import tqdm

from paramcorr.cli.config import AnalysisConfig
from paramcorr.correlation.estimators import XiResult, estimate_xi
from paramcorr.data.catalog import (
    Catalog,
    filter_mass_floor,
    load_catalog,
    merge_catalogs,
    select_redshift_bin,
)
from paramcorr.data.randoms import RandomSpec, generate_randoms, save_randoms
from paramcorr.data.transform import AxisTransformSpec, to_point_set
from paramcorr.data.utils import atomic_write_text, replicate_seed, write_json
from paramcorr.errors import ConfigError, FitError
from paramcorr.merger import MergerParams, invert_for_eta, merger_ratios
from paramcorr.stats.fitstats import fit_inverse_power_law, goodness_of_fit
from paramcorr.stats.ranktest import compatibility_table

MANIFEST_FNAME = "manifest.json"
ERROR_REPORT_FNAME = "error_report.json"


def _file_stem(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9.+-]+", "_", name).strip("_")


def versions() -> Dict[str, str]:
    try:
        own = version("paramcorr")
    except PackageNotFoundError:
        own = "unknown"
    return {
        "paramcorr": own,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "numba": numba.__version__,
    }


def write_error_report(output_dir: str, command: str, exc: BaseException) -> str:
    """Machine-readable report of a failed command."""
    return write_json(
        os.path.join(output_dir, ERROR_REPORT_FNAME),
        {
            "command": command,
            "error_type": type(exc).__name__,
            "message": str(exc),
            "problems": getattr(exc, "problems", None),
            "traceback": traceback.format_exception_only(type(exc), exc),
        },
    )


def load_catalogs(cfg: AnalysisConfig, verbose: bool = False) -> Dict[str, Catalog]:
    """Load every catalog of the config, keyed by label, in config order."""
    catalogs = {}
    for entry in cfg["catalogs"]:
        path = cfg.resolve_path(entry["path"])
        label = entry.get("label") or os.path.splitext(os.path.basename(path))[0]
        catalogs[label] = load_catalog(path, entry.get("schema"), label, verbose=verbose)
    return catalogs


@dataclass
class CorrelationJob:
    index: int
    name: str
    component: Catalog
    survey_bin: Catalog
    seed: int


def build_jobs(cfg: AnalysisConfig, catalogs: Dict[str, Catalog]) -> List[CorrelationJob]:
    """One job per (component catalog, redshift bin of the merged survey catalogs).

    The mass floor applies to the survey catalogs. Job ``i`` is seeded with
    ``replicate_seed(seed, i)``.
    """
    components = [catalogs[_label(e)] for e in cfg.catalogs_with_role("component")]
    surveys = [catalogs[_label(e)] for e in cfg.catalogs_with_role("survey")]
    if not components or not surveys:
        raise ConfigError(["correlate needs at least one 'component' and one 'survey' catalog"])
    survey = merge_catalogs(surveys, "survey")
    if cfg["mass_floor"] is not None:
        survey = filter_mass_floor(survey, cfg["mass_floor"])

    jobs = []
    for comp in components:
        for z_lo, z_hi in cfg["redshift_bins"]:
            bin_cat = select_redshift_bin(survey, z_lo, z_hi)
            index = len(jobs)
            jobs.append(
                CorrelationJob(
                    index=index,
                    name=f"{comp.label}__{bin_cat.label}",
                    component=comp,
                    survey_bin=bin_cat,
                    seed=replicate_seed(cfg.seed, index),
                )
            )
    return jobs


def _label(entry: dict) -> str:
    return entry.get("label") or os.path.splitext(os.path.basename(entry["path"]))[0]


def fit_report(result: XiResult, estimators: Sequence[int], alpha: float, weighted: bool):
    """Power-law fit and KS goodness of fit per estimator.

    Returns:
        Tuple of the result with fitted columns and the JSON-ready report.
    """
    report = {}
    r = result.bin_centers
    for e in estimators:
        xi = result.xi(e)
        try:
            fit = fit_inverse_power_law(r, xi, result.sigma(e) if weighted else None)
            ks = goodness_of_fit(xi, fit, r, alpha=alpha)
        except FitError as err:
            warnings.warn(f"Estimator {e} of {result.meta.get('labels')}: {err}", UserWarning)
            report[str(e)] = {"error": str(err)}
            continue
        report[str(e)] = {"fit": fit.to_dict(), "ks": ks.to_dict()}
        result = result.with_fit(e, fit.A, fit.to_dict())
    return result, report


def _run_job(payload) -> dict:
    job, corr_cfg, fit_cfg, output_dir = payload
    out = {"name": job.name, "index": job.index, "seed": job.seed, "files": []}
    try:
        cfg = replace(corr_cfg, seed=job.seed)
        result = estimate_xi(job.component, job.survey_bin, cfg)
        result, report = fit_report(result, fit_cfg["estimators"], fit_cfg["alpha"], fit_cfg["weighted"])
        stem = _file_stem(job.name)
        xi_path = result.save(os.path.join(output_dir, f"xi_{stem}.csv"))
        fit_path = write_json(
            os.path.join(output_dir, f"fit_{stem}.json"),
            {"labels": result.meta["labels"], "alpha": fit_cfg["alpha"], "estimators": report},
        )
        out["files"] = [os.path.basename(xi_path), os.path.basename(fit_path)]
    except Exception as e:
        out["error"] = {"error_type": type(e).__name__, "message": str(e)}
    return out


def run_correlate(
    cfg: AnalysisConfig,
    output_dir: Optional[str] = None,
    n_workers: Optional[int] = None,
    verbose: bool = False,
    progress_bar: bool = False,
) -> int:
    """Cross-correlate every component catalog with every redshift bin.

    Writes per job ``xi_<job>.csv`` (+ ``.json`` sidecar) and
    ``fit_<job>.json``, then ``manifest.json`` with the config hash, seeds,
    versions and a ``status`` of ``"complete"`` or ``"partial"``. Only the
    manifest carries a timestamp.

    Returns:
        int: 0 on success, 1 if validation or any job failed (an
        ``error_report.json`` is written).
    """
    output_dir = cfg.output_dir(output_dir)
    os.makedirs(output_dir, exist_ok=True)
    try:
        cfg.validate()
        catalogs = load_catalogs(cfg, verbose=verbose)
        jobs = build_jobs(cfg, catalogs)
    except Exception as e:
        write_error_report(output_dir, "correlate", e)
        print(f"correlate failed: {e}", file=sys.stderr)
        return 1

    n_workers = n_workers or cfg["n_workers"]
    skipped = [j for j in jobs if len(j.survey_bin) == 0]
    for j in skipped:
        warnings.warn(f"Skipping {j.name}: redshift bin is empty", UserWarning)
    todo = [j for j in jobs if len(j.survey_bin) > 0]

    corr_cfg = cfg.correlation_config(cfg.seed)
    if n_workers > 1:
        corr_cfg.n_workers = 1
    fit_cfg = dict(cfg["fit"])
    payloads = [(j, corr_cfg, fit_cfg, output_dir) for j in todo]
    if verbose:
        print(f"Running {len(todo)} correlation jobs on {n_workers} workers into {output_dir}")
    if n_workers > 1 and len(payloads) > 1:
        with multiprocessing.get_context("spawn").Pool(n_workers) as pool:
            results = list(
                tqdm(pool.imap(_run_job, payloads), total=len(payloads), disable=not progress_bar)
            )
    else:
        results = [_run_job(p) for p in tqdm(payloads, disable=not progress_bar)]

    failed = [r for r in results if "error" in r]
    status = "complete" if not failed and not skipped else "partial"
    manifest = {
        "command": "correlate",
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "status": status,
        "config_hash": cfg.hash,
        "config": cfg.config,
        "master_seed": cfg.seed,
        "jobs": [
            {"name": r["name"], "seed": r["seed"], "files": r["files"], "error": r.get("error")}
            for r in results
        ],
        "skipped": [j.name for j in skipped],
        "versions": versions(),
    }
    write_json(os.path.join(output_dir, MANIFEST_FNAME), manifest)
    if failed:
        write_json(
            os.path.join(output_dir, ERROR_REPORT_FNAME),
            {"command": "correlate", "failed_jobs": [{"name": r["name"], **r["error"]} for r in failed]},
        )
        print(f"{len(failed)} of {len(results)} jobs failed; see {ERROR_REPORT_FNAME}", file=sys.stderr)
        return 1
    return 0


def run_ranktest(
    cfg: AnalysisConfig,
    output_dir: Optional[str] = None,
    verbose: bool = False,
) -> pd.DataFrame:
    """Compatibility tests between the config's catalogs.

    Writes ``ranktest.json`` (rows plus alpha and method) and a rendered
    ``ranktest.txt`` table to the output directory.
    """
    cfg.validate()
    rt = cfg["ranktest"]
    catalogs = load_catalogs(cfg, verbose=verbose)
    if len(catalogs) < 2:
        raise ConfigError(["ranktest needs at least 2 catalogs"])
    selected = list(catalogs.values())
    if rt["compare"]:
        keep = set(rt["compare"]) | ({rt["reference"]} if rt["reference"] else set())
        selected = [c for c in selected if c.label in keep]
    table = compatibility_table(
        selected,
        reference=rt["reference"],
        design=rt["design"],
        variables=rt["variables"],
        method=rt["method"],
        alpha=rt["alpha"],
        n_perms=rt["n_perms"],
        seed=cfg.seed,
        verbose=verbose,
    )
    output_dir = cfg.output_dir(output_dir)
    write_json(
        os.path.join(output_dir, "ranktest.json"),
        {
            "alpha": rt["alpha"],
            "method": rt["method"],
            "design": rt["design"],
            "variables": rt["variables"],
            "seed": cfg.seed,
            "rows": json.loads(table.to_json(orient="records")),
        },
    )
    atomic_write_text(os.path.join(output_dir, "ranktest.txt"), table.to_string(index=False) + "\n")
    return table


def run_fit(
    xi_csv: str,
    estimators: Optional[Sequence[int]] = None,
    alpha: float = 0.05,
    weighted: bool = False,
    output: Optional[str] = None,
) -> dict:
    """Fit and KS-test an existing XiResult CSV; write the report to ``output`` if given."""
    result = XiResult.load(xi_csv)
    estimators = list(estimators) if estimators else result.estimators
    _, report = fit_report(result, estimators, alpha, weighted)
    payload = {"source": os.path.basename(xi_csv), "alpha": alpha, "estimators": report}
    if output:
        write_json(output, payload)
    return payload


def run_randoms(
    catalog_path: str,
    seed: int,
    output: str,
    multiplier: float = 1.0,
    schema: Optional[dict] = None,
) -> str:
    """Uniform random catalog over the raw (mass, size) ranges of a catalog."""
    catalog = load_catalog(catalog_path, schema)
    transform = AxisTransformSpec(rescale={"mass": False, "size": False})
    source = to_point_set(catalog, transform)
    randoms = generate_randoms(source, RandomSpec.for_catalog(len(source), seed, multiplier))
    return save_randoms(randoms, output)


def run_merger(
    epsilon: float,
    eta: Optional[float] = None,
    target_size: Optional[float] = None,
) -> dict:
    """Merger ratios for ``eta``, or the ``eta`` reaching ``target_size`` and its ratios."""
    if (eta is None) == (target_size is None):
        raise ValueError("Give exactly one of eta and target_size")
    if eta is None:
        eta = invert_for_eta(target_size, epsilon)
    ratios = merger_ratios(MergerParams(eta, epsilon))
    return {"eta": eta, "epsilon": epsilon, **ratios.to_dict()}
