"""Command-line entry point: ``causalball screen|estimate|simulate``.

Exit codes: 0 success, 2 schema/input error, 3 degenerate data,
4 non-converged fit under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .errors import ConvergenceError, DegenerateDataError, SchemaError
from .pipeline import RunConfig, Schema, ingest_csv, run_cbs, write_csv_tables
from .screening import resolve_q, screen

EXIT_OK, EXIT_SCHEMA, EXIT_DEGENERATE, EXIT_CONVERGENCE = 0, 2, 3, 4


def _columns(s):
    return tuple(c.strip() for c in s.split(",") if c.strip()) if s else ()


def _delimiter(s):
    s = {"tab": "\t", "\\t": "\t"}.get(s, s)
    if len(s) != 1:
        raise argparse.ArgumentTypeError("delimiter must be a single character")
    return s


def _q(s):
    if s == "nlogn":
        return s
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError("q must be an integer or 'nlogn'") from None
    if v < 1:
        raise argparse.ArgumentTypeError("q must be >= 1")
    return v


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage already; keep it but route through our codes
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_SCHEMA)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="causalball", description="Causal ball screening for treatment effects.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp):
        sp.add_argument("--input", required=True, help="header-first delimited file")
        sp.add_argument("--treatment", required=True)
        sp.add_argument("--outcome", required=True)
        sp.add_argument("--covariates", type=_columns, default=None,
                        help="comma-separated; default: every other column")
        sp.add_argument("--unpenalized", type=_columns, default=())
        sp.add_argument("--delimiter", type=_delimiter, default=",")
        sp.add_argument("--q", type=_q, default=30, help="screened set size or 'nlogn'")
        sp.add_argument("--q-rule", choices=("fixed", "nlogn"), default="fixed",
                        help="nlogn: q = floor(n / log n), overriding --q")
        sp.add_argument("--jobs", type=int, default=1, help="screening threads")
        sp.add_argument("--out", default=None, help="output file (json) or directory (csv)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")

    sc = sub.add_parser("screen", help="rank covariates by conditional ball covariance")
    data_args(sc)
    sc.add_argument("--top", type=int, default=None, help="only report the top k rows")

    es = sub.add_parser("estimate", help="full pipeline: screen, fit, AIPW estimate")
    data_args(es)
    es.add_argument("--epsilon", type=float, default=0.01, help="propensity clamp")
    es.add_argument("--alpha", type=float, default=0.05, help="1 - CI level")
    es.add_argument("--seed", type=int, default=0)
    es.add_argument("--folds", type=int, default=10)
    es.add_argument("--cv-rule", choices=("min", "1se"), default="min")
    es.add_argument("--balance", choices=("rho", "coefficient"), default="rho")
    es.add_argument("--top", type=int, default=None)
    es.add_argument("--strict", action="store_true",
                    help="fail (exit 4) when any fit did not converge")

    si = sub.add_parser("simulate", help="Monte Carlo studies on the synthetic designs")
    si.add_argument("--scenario", choices=("table1", "dr"), default="table1")
    si.add_argument("--n", type=int, default=300)
    si.add_argument("--p", type=int, default=100)
    si.add_argument("--runs", type=int, default=200)
    si.add_argument("--seed", type=int, default=0)
    si.add_argument("--jobs", type=int, default=1, help="worker processes")
    si.add_argument("--out", default=None, help="summary JSON; per-run CSV alongside")
    return p


def _q_of(args):
    return "nlogn" if args.q_rule == "nlogn" else args.q


def _load(args):
    schema = Schema(args.treatment, args.outcome, args.covariates, args.unpenalized)
    return ingest_csv(args.input, schema, delimiter=args.delimiter)


def _emit(text, out):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text)


def _screen(args):
    data = _load(args)
    q = resolve_q(_q_of(args), data.n)
    sr = screen(data.x, data.y, data.d, q, n_jobs=args.jobs)
    order = sr.order
    if args.top is not None:
        order = order[: args.top]
    chosen = set(sr.selected)
    rows = [{"rank": r + 1, "column": sr.names[j], "score": float(sr.scores[j]),
             "screened": j in chosen} for r, j in enumerate(order)]
    if args.format == "json":
        _emit(json.dumps({"q": sr.q, "selected": sr.selected_names, "scores": rows},
                         indent=2, sort_keys=True), args.out)
    else:
        lines = ["rank,column,score,screened"]
        lines += [f"{r['rank']},{r['column']},{r['score']!r},{int(r['screened'])}" for r in rows]
        text = "\n".join(lines) + "\n"
        if args.out is None:
            _emit(text, None)
        else:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "scores.csv").write_text(text)


def _estimate(args):
    data = _load(args)
    config = RunConfig(q=_q_of(args), epsilon=args.epsilon, alpha=args.alpha, seed=args.seed,
                       cv_folds=args.folds, cv_rule=args.cv_rule, balance=args.balance,
                       unpenalized=args.unpenalized, n_jobs=args.jobs, strict=args.strict)
    report = run_cbs(data, config)
    if args.format == "json":
        _emit(report.to_json(top_k=args.top), args.out)
    else:
        tables = write_csv_tables(report, args.out)
        if args.out is None:
            _emit(tables["estimate.csv"], None)


def _simulate(args):
    from . import simharness as sh

    config = RunConfig()
    if args.scenario == "table1":
        spec = sh.DgpSpec(n=args.n, p=args.p, seed=args.seed)
        summary = sh.run_mc(spec, args.runs, config, n_jobs=args.jobs)
        result = {"scenario": "table1", "n": args.n, "p": args.p, **summary.to_dict(),
                  "x5_ps_rate": summary.selection_rate("X5"),
                  "x6_ps_rate": summary.selection_rate("X6"),
                  "provenance": sh.provenance(args.seed)}
        header = ["run", "delta_hat", "se", "covers", "selected_ps", "error"]
        per_run = [[r.run, repr(r.delta_hat), repr(r.se), int(r.covers),
                    " ".join(r.selected_ps), r.error or ""] for r in summary.records]
    else:
        cells = sh.run_dr_study(args.runs, n=args.n, p=args.p, seed=args.seed,
                                config=config, n_jobs=args.jobs)
        result = {"scenario": "dr", "n": args.n, "p": args.p, "runs": args.runs,
                  "cells": [c.to_dict() for c in cells.values()],
                  "provenance": sh.provenance(args.seed)}
        header = ["cell", "index", "delta_hat"]
        per_run = [[c.cell, k, repr(float(v))] for c in cells.values()
                   for k, v in enumerate(c.estimates)]
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out is None:
        _emit(text, None)
        return
    out = Path(args.out)
    out.write_text(text)
    with open(out.with_suffix(".runs.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(per_run)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"screen": _screen, "estimate": _estimate, "simulate": _simulate}[args.command]
    try:
        handler(args)
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DegenerateDataError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
