"""Desk-scale reproduction of the simulation figures and real-data tables.

Every experiment writes into ``<out_dir>/<experiment id>/``:

``tidy.csv``
    one row per (replication, grid point, method, metric[, delta]); for the
    power studies one row per (grid point, n, replication) with the p-value;
``summary.csv``
    mean and standard deviation over replications (the power table for the
    power studies);
``*.svg``
    one chart per panel, drawn from the summary only;
``manifest.json``
    the full configuration, grid parameters, per-replication seeds and
    library versions. ``run_experiment(load_manifest(path))`` regenerates
    byte-identical CSVs.

Simulated replications use common random numbers: replication ``r`` draws
its training and test data from the same seeds at every grid point.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .citest import TESTS, power_cell, replication_seed
from .data import Dataset, load_csv, read_schema, split
from .learners import Predictor, fit_aa, fit_fl, fit_ftu, fit_ml
from .metrics import MetricConfig, NeighborSampler, accuracy, cf_metric, expected_drawn_accuracy
from .pipeline import flap_fit
from .preprocess import TIES, fit_marginal_mapping, fit_orthogonalization
from .scm import (Scm1Params, Scm2Params, Scm3Params, ScmParams, draw_exogenous,
                  oracle_cf_metric, params_dict, simulate, with_params)

log = logging.getLogger(__name__)

METHODS = ("ML", "FTU", "FL-lite", "AA", "FLAP-1(O)", "FLAP-2(O)", "FLAP-1(M)", "FLAP-2(M)")
METRICS = ("cf_metric", "cf_bound", "accuracy", "accuracy_drawn")
CURVE_EXPERIMENTS = ("fig2a", "fig2b", "fig3a", "fig3b")
POWER_EXPERIMENTS = ("fig4-ex1", "fig4-ex2", "fig4-ex3")
TABLE_EXPERIMENTS = ("table-adult", "table-compas", "table-delta-adult", "table-delta-compas")
EXPERIMENT_IDS = CURVE_EXPERIMENTS + POWER_EXPERIMENTS + TABLE_EXPERIMENTS

DEFAULT_DELTAS = (0.0, 0.025, 0.05, 0.1, 1.0)
COMPAS_TEST_N = 1697
WORKERS_ENV = "FLAP_WORKERS"
DATA_ENV = "FLAP_DATA"


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Overrides for one experiment; ``None`` means the experiment's default."""

    experiment: str
    out_dir: str = "results"
    n: int = 2000
    n_test: int | None = None
    replications: int | None = None
    seed: int = 0
    grid: tuple[float, ...] | None = None
    deltas: tuple[float, ...] | None = None
    methods: tuple[str, ...] | None = None
    delta: float = 0.05
    m: int = 50
    sizes: tuple[int, ...] = (200, 500)
    test: str = "logistic"
    prep: str = "M"
    B: int = 199
    alpha: float = 0.05
    oracle_n: int = 20000
    ties: str = "average"
    max_units: int | None = None
    data_dir: str | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_IDS:
            raise ExperimentError(f"unknown experiment {self.experiment!r}; "
                                  f"choose from {', '.join(EXPERIMENT_IDS)}")
        for name in ("grid", "deltas", "methods", "sizes"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))
        if self.n < 10 or (self.n_test is not None and self.n_test < 10):
            raise ExperimentError("n and n_test must be at least 10")
        if self.replications is not None and self.replications < 1:
            raise ExperimentError("replications must be at least 1")
        if self.methods is not None:
            unknown = set(self.methods) - set(METHODS)
            if unknown:
                raise ExperimentError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if self.test not in TESTS:
            raise ExperimentError(f"unknown test {self.test!r}")
        if self.ties not in TIES:
            raise ExperimentError(f"ties must be one of {TIES}")
        if self.deltas is not None and any(not 0 <= d <= 1 for d in self.deltas):
            raise ExperimentError("deltas must lie in [0, 1]")
        if not 0 <= self.delta <= 1:
            raise ExperimentError("delta must lie in [0, 1]")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ExperimentError(f"unknown config keys {sorted(extra)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(self).items()}


# --------------------------------------------------------------------------- grids


def _curve_grid(exp: str, xs: Sequence[float] | None) -> tuple[str, list[float], list[ScmParams]]:
    if exp == "fig2a":
        xs = list(xs) if xs is not None else [round(1.0 + 0.2 * i, 10) for i in range(10)]
        return "sigma_a", xs, [Scm1Params(sigma_a=x) for x in xs]
    if exp == "fig2b":
        xs = list(xs) if xs is not None else [round(0.1 * i, 10) for i in range(9)]
        return "lambda", xs, [Scm3Params(lam=x) for x in xs]
    if exp == "fig3a":
        # income medians move down for the minority groups: (lambda_a1, lambda_a2) = (-0.2t, -0.4t)
        xs = list(xs) if xs is not None else [round(0.2 * i, 10) for i in range(6)]
        return "t_income", xs, [Scm2Params(lambda_a1=-0.2 * x, lambda_a2=-0.4 * x) for x in xs]
    if exp == "fig3b":
        # education means move down: (lambda_e1, lambda_e2) = (-0.3t, -0.6t)
        xs = list(xs) if xs is not None else [round(0.2 * i, 10) for i in range(6)]
        return "t_education", xs, [Scm2Params(lambda_e1=-0.3 * x, lambda_e2=-0.6 * x) for x in xs]
    raise ExperimentError(exp)


def _power_grid(exp: str, xs: Sequence[float] | None) -> tuple[str, list[float], list[ScmParams]]:
    default = [0.0, 0.25, 0.5, 0.75, 1.0]
    if exp == "fig4-ex1":
        # no group shift in A, so beta_s = 0 is the counterfactually fair point
        base = Scm1Params(lambda_a=0.0, sigma_a=1.0)
        xs = list(xs) if xs is not None else default
        return "beta_s", xs, [with_params(base, beta_s=x) for x in xs]
    if exp == "fig4-ex2":
        # the two minority groups hold ~20% of rows, so the same CF-metric range
        # as the other examples needs coefficients twice as large
        xs = list(xs) if xs is not None else [2 * x for x in default]
        return "beta_12", xs, [Scm2Params(beta_1=x, beta_2=x) for x in xs]
    if exp == "fig4-ex3":
        base = Scm3Params(lam=0.0)
        xs = list(xs) if xs is not None else default
        return "beta_s", xs, [with_params(base, beta_s=x) for x in xs]
    raise ExperimentError(exp)


# --------------------------------------------------------------------------- methods


def fit_methods(train: Dataset, methods: Sequence[str] = METHODS,
                ties: str = "average") -> dict[str, Predictor]:
    """Fit the requested methods; FLAP variants share one fitted preprocessor per kind."""
    out: dict[str, Predictor] = {}
    preps = {}
    for name in methods:
        if name == "ML":
            out[name] = fit_ml(train)
        elif name == "FTU":
            out[name] = fit_ftu(train)
        elif name == "FL-lite":
            out[name] = fit_fl(train)
        elif name == "AA":
            out[name] = fit_aa(train)
        elif name.startswith("FLAP-"):
            kind = name[-2]
            if kind not in preps:
                preps[kind] = (fit_orthogonalization(train) if kind == "O"
                               else fit_marginal_mapping(train, ties=ties))
            learner = "AML" if name[5] == "1" else "FTU"
            out[name] = flap_fit(train, kind, learner, prep=preps[kind])
        else:
            raise ExperimentError(f"unknown method {name!r}")
    return out


def evaluate(preds: dict[str, Predictor], train: Dataset, test: Dataset,
             deltas: Sequence[float], metric_cfg: MetricConfig, ties: str = "average"
             ) -> list[tuple[str, str, float | None, float]]:
    """``(method, metric, delta, value)`` rows for every predictor.

    CF-bound units are the test rows; neighbourhood samples are shared across
    predictors and deltas.
    """
    prep_m = fit_marginal_mapping(train, ties=ties)
    units = test
    if metric_cfg.max_units is not None and test.n > metric_cfg.max_units:
        idx = np.sort(np.random.default_rng([metric_cfg.seed, 7]).choice(
            test.n, metric_cfg.max_units, replace=False))
        if len(np.unique(test.s[idx])) == test.k:
            units = test.subset(idx)
    sampler = NeighborSampler(train, units, deltas, metric_cfg.m, metric_cfg.seed)
    rows = []
    for name, pred in preds.items():
        rows.append((name, "cf_metric", None, cf_metric(pred, test, prep_m)))
        us = pred.score(units.s, units.a)
        ts = pred.score(train.s, train.a)
        for di, delta in enumerate(sampler.deltas):
            rows.append((name, "cf_bound", delta, sampler.bound(us, ts, di)))
        rows.append((name, "accuracy", None, accuracy(pred, test)))
        rows.append((name, "accuracy_drawn", None, expected_drawn_accuracy(pred, test)))
    return rows


# --------------------------------------------------------------------------- workers


def worker_count(cfg: ExperimentConfig) -> int:
    if cfg.workers is not None:
        return max(1, int(cfg.workers))
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ExperimentError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _map(fn: Callable, tasks: list, workers: int) -> list:
    """Ordered map, in a process pool when ``workers > 1``."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


# --------------------------------------------------------------------------- curve experiments


def _curve_task(task):
    cfg, r, xi, x, params = task
    n_test = cfg.n_test or cfg.n // 2
    train, _ = simulate(params, cfg.n, replication_seed(cfg.seed, r, 0))
    test, _ = simulate(params, n_test, replication_seed(cfg.seed, r, 1))
    if len(np.unique(train.s)) < params.k or len(np.unique(test.s)) < params.k:
        raise ExperimentError(f"replication {r} drew an empty group; increase n")
    preds = fit_methods(train, cfg.methods or METHODS, cfg.ties)
    mcfg = MetricConfig(cfg.delta, cfg.m, replication_seed(cfg.seed, r, 2), cfg.max_units)
    return [(r, xi, x, *row) for row in evaluate(preds, train, test, [cfg.delta], mcfg, cfg.ties)]


def _run_curve(cfg: ExperimentConfig, exp_dir: Path) -> dict:
    x_name, xs, points = _curve_grid(cfg.experiment, cfg.grid)
    R = cfg.replications or 100
    tasks = [(cfg, r, xi, x, p) for r in range(R) for xi, (x, p) in enumerate(zip(xs, points))]
    results = _map(_curve_task, tasks, worker_count(cfg))
    tidy = [{"experiment": cfg.experiment, "replication": r, "x_name": x_name, "x": x,
             "method": method, "metric": metric, "delta": delta, "value": value}
            for rows in results for (r, xi, x, method, metric, delta, value) in rows]
    _write_tidy(exp_dir / "tidy.csv", tidy)
    summary = summarize(read_tidy(exp_dir / "tidy.csv"))
    _write_summary(exp_dir / "summary.csv", summary)
    plots = plot_curves(summary, exp_dir, cfg.experiment)
    seeds = [{"replication": r, "train": replication_seed(cfg.seed, r, 0),
              "test": replication_seed(cfg.seed, r, 1), "metrics": replication_seed(cfg.seed, r, 2)}
             for r in range(R)]
    return {"x_name": x_name, "grid": [{"x": x, "params": params_dict(p)} for x, p in zip(xs, points)],
            "seeds": seeds, "files": ["tidy.csv", "summary.csv", *plots]}


# --------------------------------------------------------------------------- power experiments


def _power_task(task):
    cfg, params, n, R = task
    _, pvals = power_cell(params, n, R, cfg.test, cfg.prep, cfg.alpha, cfg.seed, cfg.B)
    return pvals


def _run_power(cfg: ExperimentConfig, exp_dir: Path) -> dict:
    x_name, xs, points = _power_grid(cfg.experiment, cfg.grid)
    R = cfg.replications or 200
    oracle_seed = replication_seed(cfg.seed, 10_000_019)
    cf = [oracle_cf_metric(p, draw_exogenous(p, cfg.oracle_n, oracle_seed)) for p in points]
    tasks = [(cfg, p, n, R) for p in points for n in cfg.sizes]
    results = _map(_power_task, tasks, worker_count(cfg))
    tidy, summary = [], []
    it = iter(results)
    for xi, (x, p) in enumerate(zip(xs, points)):
        for n in cfg.sizes:
            pvals = next(it)
            rejects = [int(pv < cfg.alpha) for pv in pvals]
            tidy += [{"experiment": cfg.experiment, "point": xi, "x_name": x_name, "x": x, "n": n,
                      "replication": r, "p_value": pv, "reject": rej}
                     for r, (pv, rej) in enumerate(zip(pvals, rejects))]
            summary.append({"example": cfg.experiment, "point": xi, "x_name": x_name, "x": x,
                            "n": n, "cf_metric": cf[xi], "power": sum(rejects) / R, "R": R,
                            "alpha": cfg.alpha, "test": cfg.test, "prep": cfg.prep})
    _write_rows(exp_dir / "tidy.csv", tidy)
    _write_rows(exp_dir / "summary.csv", summary)
    plots = plot_power(summary, exp_dir, cfg.experiment)
    return {"x_name": x_name, "grid": [{"x": x, "params": params_dict(p), "cf_metric": c}
                                       for x, p, c in zip(xs, points, cf)],
            "seeds": {"replications": [replication_seed(cfg.seed, r) for r in range(R)],
                      "oracle": oracle_seed},
            "files": ["tidy.csv", "summary.csv", *plots]}


# --------------------------------------------------------------------------- real-data tables


def data_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.data_dir or os.environ.get(DATA_ENV, "data"))


def shipped_schema(name: str) -> Path:
    return Path(str(files("flap") / "schemas" / f"{name}.schema"))


def load_real(name: str, directory: Path, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Train/test split of the COMPAS or adult data under the shipped schema."""
    fetch = "run scripts/fetch_data.py to download it"
    if name == "compas":
        path = directory / "compas.csv"
        if not path.exists():
            raise ExperimentError(f"{path} not found; {fetch}")
        data, report = load_csv(path, read_schema(shipped_schema("compas")))
        log.info("COMPAS: %s", report)
        return split(data, COMPAS_TEST_N, seed)
    if name == "adult":
        tr_path, te_path = directory / "adult_train.csv", directory / "adult_test.csv"
        for p in (tr_path, te_path):
            if not p.exists():
                raise ExperimentError(f"{p} not found; {fetch}")
        schema = read_schema(shipped_schema("adult"))
        train, _ = load_csv(tr_path, schema)
        test, _ = load_csv(te_path, schema, like=train)
        return train, test
    raise ExperimentError(f"unknown dataset {name!r}")


def _run_table(cfg: ExperimentConfig, exp_dir: Path) -> dict:
    name = cfg.experiment.split("-")[-1]
    with_deltas = cfg.experiment.startswith("table-delta")
    deltas = tuple(cfg.deltas or DEFAULT_DELTAS) if with_deltas else (cfg.delta,)
    R = cfg.replications or 1
    tidy, seeds = [], []
    for r in range(R):
        split_seed = cfg.seed + r
        train, test = load_real(name, data_dir(cfg), split_seed)
        preds = fit_methods(train, cfg.methods or METHODS, cfg.ties)
        metric_seed = replication_seed(cfg.seed, r, 2)
        mcfg = MetricConfig(cfg.delta, cfg.m, metric_seed, cfg.max_units)
        rows = evaluate(preds, train, test, deltas, mcfg, cfg.ties)
        if with_deltas:
            rows = [row for row in rows if row[1] == "cf_bound"]
        tidy += [{"experiment": cfg.experiment, "replication": r, "x_name": "dataset", "x": name,
                  "method": m, "metric": metric, "delta": delta, "value": value}
                 for (m, metric, delta, value) in rows]
        seeds.append({"replication": r, "split": split_seed, "metrics": metric_seed,
                      "n_train": train.n, "n_test": test.n})
    _write_tidy(exp_dir / "tidy.csv", tidy)
    summary = summarize(read_tidy(exp_dir / "tidy.csv"))
    _write_summary(exp_dir / "summary.csv", summary)
    plots = plot_deltas(summary, exp_dir, cfg.experiment) if with_deltas else []
    return {"dataset": name, "deltas": list(deltas), "seeds": seeds,
            "files": ["tidy.csv", "summary.csv", *plots]}


# --------------------------------------------------------------------------- entry point


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run one experiment; returns the directory holding its outputs."""
    exp_dir = Path(cfg.out_dir) / cfg.experiment
    try:
        exp_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExperimentError(f"cannot create output directory {exp_dir}: {exc}") from exc
    if not os.access(exp_dir, os.W_OK):
        raise ExperimentError(f"output directory {exp_dir} is not writable")
    if cfg.experiment in CURVE_EXPERIMENTS:
        details = _run_curve(cfg, exp_dir)
    elif cfg.experiment in POWER_EXPERIMENTS:
        details = _run_power(cfg, exp_dir)
    else:
        details = _run_table(cfg, exp_dir)
    manifest = {"format_version": 1, "experiment": cfg.experiment, "config": cfg.to_dict(),
                "versions": versions(), **details}
    (exp_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return exp_dir


def load_manifest(path) -> ExperimentConfig:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return ExperimentConfig.from_dict(obj["config"])


def versions() -> dict:
    import scipy

    from . import __version__
    return {"flap": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# --------------------------------------------------------------------------- CSV


TIDY_FIELDS = ("experiment", "replication", "x_name", "x", "method", "metric", "delta", "value")
SUMMARY_FIELDS = ("x_name", "x", "method", "metric", "delta", "mean", "sd", "count")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path: Path, rows: list[dict], fields: Sequence[str] | None = None) -> None:
    fields = list(fields or (rows[0].keys() if rows else []))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_cell(row.get(f)) for f in fields])


def _write_tidy(path: Path, rows: list[dict]) -> None:
    _write_rows(path, rows, TIDY_FIELDS)


def _write_summary(path: Path, rows: list[dict]) -> None:
    _write_rows(path, rows, SUMMARY_FIELDS)


def read_tidy(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(v: str):
    try:
        return float(v)
    except ValueError:
        return v


def summarize(tidy: list[dict]) -> list[dict]:
    """Mean and sample standard deviation per (x, method, metric, delta), in
    first-appearance order."""
    groups: dict[tuple, list[float]] = {}
    for row in tidy:
        key = (row["x_name"], _num(row["x"]), row["method"], row["metric"],
               float(row["delta"]) if row["delta"] not in ("", None) else None)
        groups.setdefault(key, []).append(float(row["value"]))
    out = []
    for (x_name, x, method, metric, delta), vals in groups.items():
        arr = np.asarray(vals)
        sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        out.append({"x_name": x_name, "x": x, "method": method, "metric": metric, "delta": delta,
                    "mean": float(arr.mean()), "sd": sd, "count": len(arr)})
    return out


def read_summary(path) -> list[dict]:
    rows = read_tidy(path)
    for row in rows:
        row["x"] = _num(row["x"])
        row["delta"] = float(row["delta"]) if row["delta"] else None
        for k in ("mean", "sd"):
            row[k] = float(row[k])
        row["count"] = int(row["count"])
    return rows


def summary_lookup(rows: list[dict]) -> dict[tuple, float]:
    """``(x, method, metric, delta) -> mean``."""
    return {(r["x"], r["method"], r["metric"], r["delta"]): r["mean"] for r in rows}


# --------------------------------------------------------------------------- plots


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "flap"
    return plt


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_curves(summary: list[dict], out_dir: Path, title: str) -> list[str]:
    """One SVG per metric: replication mean with a +-1 sd band per method."""
    plt = _pyplot()
    names = []
    for metric in ("cf_metric", "cf_bound", "accuracy"):
        rows = [r for r in summary if r["metric"] == metric]
        if not rows:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        for method in dict.fromkeys(r["method"] for r in rows):
            sub = [r for r in rows if r["method"] == method]
            x = np.array([r["x"] for r in sub], dtype=float)
            mu = np.array([r["mean"] for r in sub])
            sd = np.array([r["sd"] for r in sub])
            ax.plot(x, mu, marker="o", ms=3, label=method)
            ax.fill_between(x, mu - sd, mu + sd, alpha=0.15)
        ax.set_xlabel(rows[0]["x_name"])
        ax.set_ylabel(metric)
        ax.set_title(f"{title}: {metric}")
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        name = f"{title}_{metric}.svg"
        _save(fig, out_dir / name)
        plt.close(fig)
        names.append(name)
    return names


def plot_power(summary: list[dict], out_dir: Path, title: str) -> list[str]:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for n in dict.fromkeys(r["n"] for r in summary):
        sub = sorted((r for r in summary if r["n"] == n), key=lambda r: r["cf_metric"])
        ax.plot([r["cf_metric"] for r in sub], [r["power"] for r in sub], marker="o", label=f"n={n}")
    ax.axhline(summary[0]["alpha"], color="grey", lw=0.8, ls="--")
    ax.set_xlabel("CF-metric of the generating decision rule")
    ax.set_ylabel("rejection rate")
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    name = f"{title}_power.svg"
    _save(fig, out_dir / name)
    plt.close(fig)
    return [name]


def plot_deltas(summary: list[dict], out_dir: Path, title: str) -> list[str]:
    plt = _pyplot()
    rows = [r for r in summary if r["metric"] == "cf_bound"]
    fig, ax = plt.subplots(figsize=(6, 4))
    for method in dict.fromkeys(r["method"] for r in rows):
        sub = [r for r in rows if r["method"] == method]
        ax.plot(range(len(sub)), [r["mean"] for r in sub], marker="o", label=method)
        ax.set_xticks(range(len(sub)), [f"{r['delta']:g}" for r in sub])
    ax.set_xlabel("delta")
    ax.set_ylabel("cf_bound")
    ax.set_title(title)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    name = f"{title}_cf_bound.svg"
    _save(fig, out_dir / name)
    plt.close(fig)
    return [name]


def replot(exp_dir) -> list[str]:
    """Redraw an experiment's charts from its CSV output alone."""
    exp_dir = Path(exp_dir)
    manifest = json.loads((exp_dir / "manifest.json").read_text(encoding="utf-8"))
    exp = manifest["experiment"]
    if exp in POWER_EXPERIMENTS:
        rows = read_tidy(exp_dir / "summary.csv")
        for r in rows:
            r["n"] = int(r["n"])
            r["cf_metric"], r["power"], r["alpha"] = float(r["cf_metric"]), float(r["power"]), float(r["alpha"])
        return plot_power(rows, exp_dir, exp)
    summary = summarize(read_tidy(exp_dir / "tidy.csv"))
    if exp in CURVE_EXPERIMENTS:
        return plot_curves(summary, exp_dir, exp)
    if exp.startswith("table-delta"):
        return plot_deltas(summary, exp_dir, exp)
    return []


def format_table(summary: list[dict], metrics: Sequence[str] = ("cf_metric", "cf_bound", "accuracy",
                                                                 "accuracy_drawn")) -> str:
    """Plain-text method x metric table of replication means."""
    methods = list(dict.fromkeys(r["method"] for r in summary))
    cols = []
    for r in summary:
        key = (r["metric"], r["delta"])
        if r["metric"] in metrics and key not in cols:
            cols.append(key)
    look = {(r["method"], r["metric"], r["delta"]): r["mean"] for r in summary}
    head = ["method"] + [m if d is None else f"{m}@{d:g}" for m, d in cols]
    lines = ["  ".join(f"{h:>14s}" for h in head)]
    for m in methods:
        vals = [look.get((m, *c)) for c in cols]
        lines.append("  ".join([f"{m:>14s}"] + [f"{v:14.4f}" if v is not None else " " * 14 for v in vals]))
    return "\n".join(lines)
