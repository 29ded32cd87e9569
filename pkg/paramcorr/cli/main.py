"""Command-line entry point ``paramcorr``.

Subcommands::

    paramcorr correlate CONFIG [-p section.key=value ...]
    paramcorr ranktest (--config CONFIG | CATALOG CATALOG ...) [--alpha ...]
    paramcorr fit XI_CSV [--estimators 1 2] [--alpha 0.05] [--weighted]
    paramcorr randoms CATALOG --seed SEED -o OUT.csv
    paramcorr merger (--eta ETA | --target-size T) --epsilon EPS
    paramcorr validate-config CONFIG

Config overrides follow ``-p section.key=value`` with JSON-parsed values.
"""

import argparse
import os
import sys
import warnings
from typing import List, Optional

from paramcorr.cli import runner
from paramcorr.cli.config import AnalysisConfig
from paramcorr.config import DEFAULT_FIT_ALPHA, DEFAULT_N_PERMS, DEFAULT_RANKTEST_ALPHA
from paramcorr.data.utils import to_json_text
from paramcorr.errors import ConfigError


def _add_config_args(parser: argparse.ArgumentParser, required: bool = True):
    if required:
        parser.add_argument("config", help="Analysis config (JSON)")
    else:
        parser.add_argument("--config", default=None, help="Analysis config (JSON)")
    parser.add_argument(
        "-p",
        nargs="*",
        default=[],
        help="Override config parameters, e.g. -p bins.n_bins=20 randoms.multiplier=5",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paramcorr",
        description="Cross-correlation functions and compatibility tests in parametric spaces.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Print progress messages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("correlate", help="Run the cross-correlation pipeline")
    _add_config_args(p)
    p.add_argument("-o", "--output-dir", default=None)
    p.add_argument("--n-workers", type=int, default=None)
    p.add_argument("--progress-bar", action="store_true")

    p = sub.add_parser("ranktest", help="Multivariate multisample rank test between catalogs")
    _add_config_args(p, required=False)
    p.add_argument("catalogs", nargs="*", help="Catalog CSVs (used when no --config is given)")
    p.add_argument("--reference", default=None, help="Reference catalog label")
    p.add_argument("--design", choices=["reference", "pairwise"], default="reference")
    p.add_argument("--variables", nargs="+", default=["mass", "size"])
    p.add_argument("--alpha", type=float, default=DEFAULT_RANKTEST_ALPHA)
    p.add_argument("--method", choices=["auto", "mckeon_f", "permutation"], default="auto")
    p.add_argument("--n-perms", type=int, default=DEFAULT_N_PERMS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output-dir", default=None)

    p = sub.add_parser("fit", help="Power-law fit and KS test of an xi CSV")
    p.add_argument("xi_csv")
    p.add_argument("--estimators", nargs="+", type=int, default=None)
    p.add_argument("--alpha", type=float, default=DEFAULT_FIT_ALPHA)
    p.add_argument("--weighted", action="store_true", help="Weight bins by 1/sigma^2")
    p.add_argument("-o", "--output", default=None, help="JSON report path")

    p = sub.add_parser("randoms", help="Uniform random catalog over a catalog's ranges")
    p.add_argument("catalog")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--multiplier", type=float, default=1.0)
    p.add_argument("-o", "--output", required=True, help="Output CSV path")

    p = sub.add_parser("merger", help="Dry-merger size, speed and density ratios")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--eta", type=float, help="Accreted-to-initial mass ratio")
    target.add_argument("--target-size", type=float, help="Size ratio to invert for eta")
    p.add_argument("--epsilon", type=float, required=True, help="Mean-square-speed ratio")

    p = sub.add_parser("validate-config", help="Check an analysis config without running it")
    _add_config_args(p)
    return parser


def _load_config(path: str, overrides: List[str]) -> AnalysisConfig:
    return AnalysisConfig.from_file(path).apply_overrides(overrides)


def _ranktest_config(args) -> AnalysisConfig:
    if args.config:
        return _load_config(args.config, args.p)
    if len(args.catalogs) < 2:
        raise ConfigError(["ranktest needs --config or at least 2 catalog files"])
    cfg = AnalysisConfig(
        {
            "seed": args.seed,
            "catalogs": [{"path": os.path.abspath(c)} for c in args.catalogs],
            "ranktest": {
                "reference": args.reference,
                "design": args.design,
                "variables": args.variables,
                "alpha": args.alpha,
                "method": args.method,
                "n_perms": args.n_perms,
            },
        }
    )
    return cfg.apply_overrides(args.p)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if not args.verbose:
        warnings.simplefilter("once", UserWarning)

    if args.command == "correlate":
        try:
            cfg = _load_config(args.config, args.p)
        except (ConfigError, FileNotFoundError) as e:
            print(f"correlate failed: {e}", file=sys.stderr)
            return 1
        return runner.run_correlate(
            cfg, args.output_dir, args.n_workers, verbose=args.verbose, progress_bar=args.progress_bar
        )

    if args.command == "validate-config":
        try:
            _load_config(args.config, args.p).validate()
        except (ConfigError, FileNotFoundError) as e:
            print(str(e), file=sys.stderr)
            return 1
        print("Config OK")
        return 0

    if args.command == "merger":
        try:
            out = runner.run_merger(args.epsilon, eta=args.eta, target_size=args.target_size)
        except Exception as e:
            print(f"merger failed: {e}", file=sys.stderr)
            return 1
        print(to_json_text(out), end="")
        return 0

    output_dir = getattr(args, "output_dir", None)
    try:
        if args.command == "ranktest":
            cfg = _ranktest_config(args)
            table = runner.run_ranktest(cfg, output_dir, verbose=args.verbose)
            print(table.to_string(index=False))
        elif args.command == "fit":
            out = runner.run_fit(args.xi_csv, args.estimators, args.alpha, args.weighted, args.output)
            print(to_json_text(out), end="")
        elif args.command == "randoms":
            path = runner.run_randoms(args.catalog, args.seed, args.output, args.multiplier)
            print(f"Wrote {path}")
    except Exception as e:
        if output_dir is not None:
            runner.write_error_report(output_dir, args.command, e)
        print(f"{args.command} failed: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
