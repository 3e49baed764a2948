"""Command-line entry point.

Subcommands: scenario-build, scenario-truth, simulate, estimate, study-run,
report. Exit codes: 0 success, 1 usage error, 2 runtime failure. Every
random draw flows from --seed (default DEFAULT_SEED below, never the clock),
so identical invocations write identical bytes; timing columns are opt-in
via --timing for the same reason.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .bootstrap import BootstrapConfig, bootstrap_ci
from .errors import EngineError
from .estimators import Estimator, EstimatorSpec, estimate_external_direct
from .harness import StudyConfig, run_study
from .report import emit_report, metric_rows, parse_metrics_csv, render_figures
from .scenario import (
    IngestionConfig,
    build_scenario,
    ingest,
    load_dataset,
    load_scenario,
    save_dataset,
    save_scenario,
    simulate,
    true_ate,
)

# All CLI randomness defaults to this constant; there is no wall-clock seeding.
DEFAULT_SEED = 0


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    p = _Parser(prog="atesim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    sb = sub.add_parser("scenario-build", help="ingest a raw CSV into a scenario file")
    sb.add_argument("--config", required=True, help="ingestion config JSON")
    sb.add_argument("--data", default=None,
                    help="raw observational CSV (overrides the config's source path)")
    sb.add_argument("--out", required=True, help="scenario JSON to write")
    sb.add_argument("--quiet", action="store_true", help="suppress the provenance log")

    st = sub.add_parser("scenario-truth", help="print a scenario's true ATE")
    st.add_argument("--scenario", required=True)

    sm = sub.add_parser("simulate", help="draw one synthetic dataset from a scenario")
    sm.add_argument("--scenario", required=True)
    sm.add_argument("--n", type=int, required=True)
    sm.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sm.add_argument("--out", required=True, help="dataset CSV to write")

    es = sub.add_parser("estimate", help="one ATE estimate on a dataset CSV")
    es.add_argument("--data", required=True, help="dataset CSV (simulate output)")
    es.add_argument("--strategy", required=True,
                    choices=("crude", "gcomp", "gcomp2", "iptw", "external-direct"))
    es.add_argument("--model", default=None,
                    choices=("logistic", "boosted-trees", "external"))
    es.add_argument("--endpoint", default=None, help="external model server address")
    es.add_argument("--bootstrap", type=int, default=599, metavar="N",
                    help="bootstrap iterations; 0 prints the point estimate only")
    es.add_argument("--level", type=float, default=0.95)
    es.add_argument("--seed", type=int, default=DEFAULT_SEED)
    es.add_argument("--workers", type=int, default=1)

    sr = sub.add_parser("study-run", help="run a Monte Carlo study config")
    sr.add_argument("--config", required=True, help="study config JSON")
    sr.add_argument("--scenario", default=None, help="override the config's scenario path")
    sr.add_argument("--out", required=True, help="metrics file to write")
    sr.add_argument("--format", default="csv", choices=("csv", "table"))
    sr.add_argument("--seed", type=int, default=None, help="override base_seed")
    sr.add_argument("--workers", type=int, default=None)
    sr.add_argument("--audit", default=None, help="write per-replicate JSONL here")
    sr.add_argument("--timing", action="store_true",
                    help="include wall-time columns (breaks byte-for-byte determinism)")
    sr.add_argument("--progress", action="store_true")

    rp = sub.add_parser("report", help="re-render a metrics CSV, with figures")
    rp.add_argument("--metrics", required=True, help="CSV produced by study-run")
    rp.add_argument("--format", default="table", choices=("csv", "table"))
    rp.add_argument("--out", default=None, help="write rendered report here (default stdout)")
    rp.add_argument("--figures-dir", default=None,
                    help="directory for metric figures (default: alongside --out)")
    rp.add_argument("--no-figures", action="store_true")

    return p


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_scenario_build(args) -> int:
    cfg = IngestionConfig.from_json(args.config)
    if args.data is not None:
        from dataclasses import replace

        cfg = replace(cfg, source=args.data)
    table = ingest(cfg)
    scen = build_scenario(table)
    save_scenario(scen, args.out)
    if not args.quiet:
        print(scen.provenance)
    print(f"strata retained: {scen.k}")
    print(f"rows retained: {scen.retained_n}")
    print(f"true ATE: {true_ate(scen):.6f}")
    return 0


def _cmd_scenario_truth(args) -> int:
    scen = load_scenario(args.scenario)
    print(f"{true_ate(scen):.3f}")
    return 0


def _cmd_simulate(args) -> int:
    scen = load_scenario(args.scenario)
    d = simulate(scen, args.n, args.seed)
    save_dataset(d, args.out)
    return 0


def _cmd_estimate(args) -> int:
    d = load_dataset(args.data)
    spec = EstimatorSpec(strategy=args.strategy, model=args.model,
                         endpoint=args.endpoint)
    doc = {"estimator": spec.label(), "n": d.n}
    if args.strategy == "external-direct":
        res = estimate_external_direct(d, spec.endpoint)
        doc.update(point=res.point, lo=res.lo, hi=res.hi, kind=res.kind)
    elif args.bootstrap == 0:
        point = Estimator(spec)(d)
        doc.update(point=point.ate_hat, kind="none")
    else:
        bcfg = BootstrapConfig(iterations=args.bootstrap, level=args.level,
                               seed=args.seed)
        res = bootstrap_ci(d, Estimator(spec), bcfg, workers=args.workers)
        doc.update(point=res.point, lo=res.lo, hi=res.hi, kind=res.kind,
                   redraw_count=res.redraw_count)
    print(json.dumps(doc))
    return 0


def _cmd_study_run(args) -> int:
    cfg = StudyConfig.from_json(args.config, scenario_path=args.scenario,
                                base_seed=args.seed, workers=args.workers)
    result = run_study(cfg, progress=args.progress)
    fmt = "aligned-table" if args.format == "table" else "csv"
    emit_report(result, fmt=fmt, path=args.out, include_timing=args.timing)
    if args.audit:
        with open(args.audit, "w", encoding="utf-8") as fh:
            for rec in result.audit:
                if not args.timing:
                    rec = {k: v for k, v in rec.items() if k != "wall_time_s"}
                fh.write(json.dumps(rec) + "\n")
    print(f"wrote {args.out} ({len(result.order)} metric rows, "
          f"true ATE {result.truth:+.6f})")
    return 0


def _cmd_report(args) -> int:
    rows = parse_metrics_csv(args.metrics)
    has_timing = any("mean_time_s" in row for row in rows)
    result = _RowsResult(rows, include_timing=has_timing)
    fmt = "aligned-table" if args.format == "table" else "csv"
    text = emit_report(result, fmt=fmt, path=args.out, include_timing=has_timing)
    if args.out is None:
        sys.stdout.write(text)
    if not args.no_figures:
        figdir = args.figures_dir
        if figdir is None:
            figdir = os.path.dirname(os.path.abspath(args.out)) if args.out else "."
        os.makedirs(figdir, exist_ok=True)
        for path in render_figures(rows, figdir):
            print(f"wrote {path}", file=sys.stderr)
    return 0


class _RowsResult:
    """Adapts parsed CSV rows back onto the StudyResult reporting surface."""

    def __init__(self, raw_rows, include_timing):
        self._rows = raw_rows
        self._timing = include_timing
        self.config_summary = None

    def rows(self):
        from .harness import StudyMetrics

        for row in self._rows:
            m = StudyMetrics(
                coverage=row["coverage_pct"] / 100.0,
                mean_width=row["mean_width_x100"] / 100.0,
                bias_eliminated_coverage=row["bias_eliminated_coverage_pct"] / 100.0,
                mean_error=row["mean_error_x1000"] / 1000.0,
                mse=row["mse_x1000"] / 1000.0,
                mean_time_s=row.get("mean_time_s", math.nan),
                mc_se_coverage=row["mc_se_coverage_pct"] / 100.0,
                failures=row["failures"],
                n_used=row["replicates"] - row["failures"],
            )
            yield (row["sample_size"], row["estimator"]), m


_DISPATCH = {
    "scenario-build": _cmd_scenario_build,
    "scenario-truth": _cmd_scenario_truth,
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "study-run": _cmd_study_run,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _DISPATCH[args.subcommand](args)
    except EngineError as exc:
        print(f"atesim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"atesim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
