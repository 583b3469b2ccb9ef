"""Command-line interface: ``flap <subcommand> --help`` documents every flag.

Exit codes: 0 success, 2 bad input (missing file, schema or config error),
1 any other failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .citest import kernel_cf_test, logistic_cf_test
from .data import Column, SchemaError, load_csv, read_schema, schema_for, write_csv, write_schema
from .experiments import (EXPERIMENT_IDS, METHODS, ExperimentConfig, ExperimentError, evaluate,
                          fit_methods, format_table, load_manifest, read_summary, run_experiment)
from .metrics import MetricConfig
from .pipeline import load_predictor, save_predictor
from .preprocess import TIES, Preprocessor, fit_preprocessor
from .scm import Scm1Params, Scm2Params, Scm3Params, simulate, with_params

log = logging.getLogger("flap")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
EXAMPLES = {"1": Scm1Params, "2": Scm2Params, "3": Scm3Params}


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


# --------------------------------------------------------------------------- helpers


def _schema(path: str):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"schema file not found: {path}")
    return read_schema(p)


def _dataset(data: str, schema: str, like=None):
    sch = _schema(schema)
    if not Path(data).is_file():
        raise InputError(f"data file not found: {data}")
    ds, report = load_csv(data, sch, like=like)
    log.info("loaded %s: %s", data, report)
    return ds, sch, report


def _parse_params(example: str, pairs: list[str]):
    params = EXAMPLES[example]()
    changes = {}
    for item in pairs or []:
        if "=" not in item:
            raise InputError(f"--param expects name=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key == "probs":
            changes[key] = tuple(float(v) for v in value.split(","))
        else:
            try:
                changes[key] = float(value)
            except ValueError:
                raise InputError(f"--param {key} needs a number, got {value!r}") from None
    try:
        return with_params(params, **changes)
    except TypeError as exc:
        raise InputError(f"unknown parameter for example {example}: {exc}") from None


def _write_json(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _floats(text: str | None):
    if text is None:
        return None
    return tuple(float(v) for v in text.split(","))


# --------------------------------------------------------------------------- subcommands


def cmd_simulate(args) -> int:
    params = _parse_params(args.example, args.param)
    data, _ = simulate(params, args.n, args.seed)
    out = Path(args.out)
    write_csv(data, out)
    schema_path = Path(args.schema_out) if args.schema_out else out.with_suffix(".schema")
    write_schema(schema_for(data), schema_path)
    print(f"wrote {data.n} rows to {out} (schema {schema_path})")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    data, _, _ = _dataset(args.data, args.schema)
    prep = fit_preprocessor(data, args.kind, ties=args.ties)
    prep.save(args.out)
    print(f"wrote {prep.kind} preprocessor to {args.out}")
    if args.apply_out:
        processed = prep.apply(data.s, data.a)
        cols = [Column(c.name) for c in data.columns]  # processed indicators are no longer 0/1
        write_csv(data.with_attributes(processed, cols), args.apply_out)
        print(f"wrote processed attributes to {args.apply_out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    data, _, _ = _dataset(args.data, args.schema)
    pred = fit_methods(data, [args.method], ties=args.ties)[args.method]
    save_predictor(pred, args.out)
    print(f"wrote {args.method} predictor to {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    pred = load_predictor(args.model)
    data, schema, _ = _dataset(args.data, args.schema)
    scores = pred.score(data.s, data.a)
    extra = {"score": scores}
    if args.decide is not None:
        extra["decision"] = (np.random.default_rng(args.decide).random(data.n) < scores).astype(float)
    write_csv(data, args.out, schema, extra=extra)
    print(f"wrote {data.n} scores to {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    train, _, _ = _dataset(args.train, args.schema)
    test, _, _ = _dataset(args.test, args.schema, like=train)
    methods = args.methods.split(",") if args.methods else list(METHODS)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise InputError(f"unknown methods {sorted(unknown)}; choose from {', '.join(METHODS)}")
    preds = fit_methods(train, methods, ties=args.ties)
    deltas = _floats(args.deltas) or (args.delta,)
    rows = evaluate(preds, train, test, deltas, MetricConfig(args.delta, args.m, args.seed), args.ties)
    records = [{"method": m, "metric": k, "delta": d, "value": v} for m, k, d, v in rows]
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, ["method", "metric", "delta", "value"], lineterminator="\n")
            w.writeheader()
            for r in records:
                w.writerow({**r, "delta": "" if r["delta"] is None else r["delta"], "value": repr(r["value"])})
    summary = [{"x_name": "", "x": "", "method": r["method"], "metric": r["metric"],
                "delta": r["delta"], "mean": r["value"]} for r in records]
    print(format_table(summary))
    return EXIT_OK


def _run_test(data, prep: Preprocessor, test: str, B: int, seed: int):
    if test == "logistic":
        return logistic_cf_test(data, prep)
    return kernel_cf_test(data, prep, B=B, seed=seed)


def cmd_test(args) -> int:
    data, _, _ = _dataset(args.data, args.schema)
    prep = Preprocessor.load(args.prep_file) if args.prep_file else fit_preprocessor(data, args.prep, ties=args.ties)
    res = _run_test(data, prep, args.test, args.B, args.seed)
    _write_json({"statistic": res.statistic, "p_value": res.p_value, "method": res.method,
                 "settings": res.settings, "prep": prep.kind, "n": data.n}, args.out)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    if args.manifest:
        cfg = load_manifest(args.manifest)
        if args.out_dir:
            cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "out_dir": args.out_dir})
    else:
        base = {}
        if args.config:
            path = Path(args.config)
            if not path.is_file():
                raise InputError(f"config file not found: {args.config}")
            base = json.loads(path.read_text(encoding="utf-8"))
        flags = {"experiment": args.experiment, "out_dir": args.out_dir, "n": args.n,
                 "n_test": args.n_test, "replications": args.replications, "seed": args.seed,
                 "grid": _floats(args.grid), "deltas": _floats(args.deltas),
                 "methods": tuple(args.methods.split(",")) if args.methods else None,
                 "sizes": tuple(int(v) for v in args.sizes.split(",")) if args.sizes else None,
                 "test": args.test, "B": args.B, "ties": args.ties, "max_units": args.max_units,
                 "data_dir": args.data_dir, "workers": args.workers}
        merged = {**base, **{k: v for k, v in flags.items() if v is not None}}
        if "experiment" not in merged:
            raise InputError("give an experiment id, --config with an experiment, or --manifest")
        cfg = ExperimentConfig.from_dict(merged)
    exp_dir = run_experiment(cfg)
    print(f"wrote {cfg.experiment} results to {exp_dir}")
    if cfg.experiment.startswith("table"):
        print(format_table(read_summary(exp_dir / "summary.csv")))
    return EXIT_OK


def cmd_audit(args) -> int:
    schema = _schema(args.schema)
    if not Path(args.data).is_file():
        raise InputError(f"data file not found: {args.data}")
    data, report = load_csv(args.data, schema)
    prep = fit_preprocessor(data, args.prep, ties=args.ties)
    res = _run_test(data, prep, args.test, args.B, args.seed)
    out = {"data": str(args.data), "schema": str(args.schema), "rows_read": report.rows_read,
           "rows_dropped": report.rows_dropped, "rows_kept": report.rows_kept,
           "groups": data.group_labels, "group_counts": data.group_counts.tolist(),
           "prep": prep.kind, "test": {"method": res.method, "statistic": res.statistic,
                                       "p_value": res.p_value, "settings": res.settings},
           "alpha": args.alpha, "fair_rejected": bool(res.p_value < args.alpha)}
    if args.fit:
        from .data import split
        train, test = split(data, max(1, int(round(args.test_fraction * data.n))), args.seed)
        preds = fit_methods(train, ["ML", "FLAP-1(M)", "FLAP-2(M)"], ties=args.ties)
        rows = evaluate(preds, train, test, [args.delta], MetricConfig(args.delta, 50, args.seed), args.ties)
        out["metrics"] = [{"method": m, "metric": k, "delta": d, "value": v} for m, k, d, v in rows]
    _write_json(out, args.out)
    verdict = "rejected" if out["fair_rejected"] else "not rejected"
    print(f"counterfactual fairness {verdict} at alpha={args.alpha} (p={res.p_value:.4g})",
          file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"flap {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def data_flags(q, data=True):
        if data:
            q.add_argument("--data", required=True, help="CSV file")
        q.add_argument("--schema", required=True, help="schema file (key = value lines)")

    def ties_flag(q):
        q.add_argument("--ties", choices=TIES, default="average",
                       help="ECDF level of tied values in marginal mapping (default: average)")

    q = sub.add_parser("simulate", help="simulate one of the structural examples to CSV")
    q.add_argument("--example", choices=sorted(EXAMPLES), required=True)
    q.add_argument("--n", type=int, default=2000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--param", action="append", metavar="NAME=VALUE",
                   help="override a structural parameter (repeatable)")
    q.add_argument("--out", required=True)
    q.add_argument("--schema-out", help="schema path (default: CSV path with .schema suffix)")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("preprocess", help="fit a preprocessor and optionally write processed data")
    data_flags(q)
    q.add_argument("--kind", choices=["O", "M"], default="M")
    ties_flag(q)
    q.add_argument("--out", required=True, help="preprocessor JSON")
    q.add_argument("--apply-out", help="also write the processed training data here")
    q.set_defaults(func=cmd_preprocess)

    q = sub.add_parser("fit", help="fit one method and save it to a directory")
    data_flags(q)
    q.add_argument("--method", choices=METHODS, default="FLAP-1(M)")
    ties_flag(q)
    q.add_argument("--out", required=True, help="model directory")
    q.set_defaults(func=cmd_fit)

    q = sub.add_parser("score", help="score a CSV with a saved model")
    data_flags(q)
    q.add_argument("--model", required=True, help="model directory written by `fit`")
    q.add_argument("--decide", type=int, metavar="SEED", help="also draw Bernoulli decisions")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_score)

    q = sub.add_parser("metrics", help="CF-metric, CF-bound and accuracy of fitted methods")
    q.add_argument("--train", required=True)
    q.add_argument("--test", required=True)
    data_flags(q, data=False)
    q.add_argument("--methods", help=f"comma list from {', '.join(METHODS)}")
    q.add_argument("--delta", type=float, default=0.05)
    q.add_argument("--deltas", help="comma list of deltas for the CF-bound")
    q.add_argument("--m", type=int, default=50, help="neighbourhood sample cap")
    q.add_argument("--seed", type=int, default=0)
    ties_flag(q)
    q.add_argument("--out", help="CSV of (method, metric, delta, value)")
    q.set_defaults(func=cmd_metrics)

    q = sub.add_parser("test", help="test counterfactual fairness of the recorded decisions")
    data_flags(q)
    q.add_argument("--prep", choices=["O", "M"], default="M")
    q.add_argument("--prep-file", help="use a saved preprocessor instead of fitting one")
    q.add_argument("--test", choices=["logistic", "kernel"], default="logistic")
    q.add_argument("--B", type=int, default=199, help="bootstrap draws (kernel test)")
    q.add_argument("--seed", type=int, default=0)
    ties_flag(q)
    q.add_argument("--out", help="JSON result (default: stdout)")
    q.set_defaults(func=cmd_test)

    q = sub.add_parser("reproduce", help="run a figure/table experiment")
    q.add_argument("experiment", nargs="?", choices=EXPERIMENT_IDS)
    q.add_argument("--manifest", help="re-run the configuration recorded in a manifest.json")
    q.add_argument("--config", help="JSON file of config values; flags override it")
    q.add_argument("--out-dir")
    q.add_argument("--n", type=int)
    q.add_argument("--n-test", type=int)
    q.add_argument("--replications", "-R", type=int)
    q.add_argument("--seed", type=int)
    q.add_argument("--grid", help="comma list of grid values")
    q.add_argument("--deltas", help="comma list of deltas (delta tables)")
    q.add_argument("--methods", help="comma list of methods")
    q.add_argument("--sizes", help="comma list of sample sizes (power studies)")
    q.add_argument("--test", choices=["logistic", "kernel"])
    q.add_argument("--B", type=int)
    q.add_argument("--ties", choices=TIES)
    q.add_argument("--max-units", type=int, help="cap on CF-bound evaluation units")
    q.add_argument("--data-dir", help="directory holding compas.csv / adult_*.csv")
    q.add_argument("--workers", type=int, help="process count (default: $FLAP_WORKERS or 1)")
    q.set_defaults(func=cmd_reproduce)

    q = sub.add_parser("audit", help="load, preprocess and test a decision dataset")
    data_flags(q)
    q.add_argument("--prep", choices=["O", "M"], default="M")
    q.add_argument("--test", choices=["logistic", "kernel"], default="logistic")
    q.add_argument("--alpha", type=float, default=0.05)
    q.add_argument("--B", type=int, default=199)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--fit", action="store_true", help="also fit FLAP and report metrics on a split")
    q.add_argument("--test-fraction", type=float, default=0.25)
    q.add_argument("--delta", type=float, default=0.05)
    ties_flag(q)
    q.add_argument("--out", help="report JSON (default: stdout)")
    q.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, SchemaError, ExperimentError, FileNotFoundError) as exc:
        print(f"flap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # surfaced as a one-line diagnostic
        if args.verbose:
            raise
        print(f"flap {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
