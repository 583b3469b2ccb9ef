"""Tests of ``Y independent of S given processed attributes``.

Under the non-sensitive conditions, rejecting this hypothesis means the
decisions are not counterfactually fair. Two tests are provided:

``logistic_cf_test``
    likelihood-ratio test for the group indicators in a logistic model that
    already contains the processed attributes (chi-square, K - 1 df).
``kernel_ci_test``
    nonparametric: a Gaussian-kernel-localized distance covariance between
    ``y`` and ``s``, calibrated by a local bootstrap that redraws ``s`` from
    its kernel-estimated conditional law given ``z``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .data import Dataset
from .learners import Design, FitError, fit_design
from .preprocess import Preprocessor, fit_preprocessor
from .scm import ScmParams, oracle_cf_metric, params_dict, simulate, draw_exogenous

log = logging.getLogger(__name__)

ALPHA = 0.05


class CITestError(RuntimeError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    settings: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


# --------------------------------------------------------------------------- parametric


def logistic_lr_test(y, s, z, k: int, ridge: float = 0.0) -> TestResult:
    if k < 2:
        raise CITestError("need at least two groups to test a group effect")
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    try:
        full = fit_design(Design(k, z.shape[1]), s, z, y, ridge)
        reduced = fit_design(Design(0, z.shape[1]), None, z, y, ridge)
    except FitError as exc:
        raise CITestError(f"logistic fit failed: {exc}") from exc
    lr = max(2.0 * (full.diagnostics.loglik - reduced.diagnostics.loglik), 0.0)
    p = float(stats.chi2.sf(lr, k - 1))
    settings = {"df": k - 1, "ridge_fallback": full.diagnostics.ridge_fallback
                or reduced.diagnostics.ridge_fallback}
    return TestResult(float(lr), p, "logistic-LR", settings)


def logistic_cf_test(data: Dataset, prep: Preprocessor, ridge: float = 0.0) -> TestResult:
    """Likelihood-ratio chi-square test of the group indicators given
    ``prep``-processed attributes."""
    return logistic_lr_test(data.y, data.s, prep.apply(data.s, data.a), data.k, ridge)


# --------------------------------------------------------------------------- kernel


def auto_bandwidth(z: np.ndarray) -> np.ndarray:
    """Per-coordinate ``sd * n^(-1/(4 + q))``."""
    n, q = z.shape
    return z.std(axis=0) * n ** (-1.0 / (4 + q))


def kernel_weights(z: np.ndarray, bandwidth) -> np.ndarray:
    """Row-normalized product-Gaussian weights, shape (n, n)."""
    scaled = z / bandwidth
    sq = np.sum(scaled ** 2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * scaled @ scaled.T, 0.0)
    w = np.exp(-0.5 * d2)
    return w / w.sum(axis=1, keepdims=True)


def _local_dcov(weights: np.ndarray, y: np.ndarray, s_onehot: np.ndarray) -> np.ndarray:
    """Mean over evaluation points of the local distance covariance of (y, s).

    With the discrete metric on both variables the squared distance
    covariance of a joint pmf is ``sum_{y,s} (p(y,s) - p(y) p(s))^2``.
    ``s_onehot`` may carry a leading bootstrap axis.
    """
    p1 = weights @ (s_onehot * y[:, None])    # P(y=1, s)
    p0 = weights @ (s_onehot * (1 - y)[:, None])
    ps = p0 + p1
    py1 = p1.sum(axis=-1, keepdims=True)
    stat = ((p1 - py1 * ps) ** 2).sum(axis=-1) + ((p0 - (1 - py1) * ps) ** 2).sum(axis=-1)
    return stat.mean(axis=-1)


def kernel_ci_test(y, s, z, bandwidth="auto", B: int = 199, seed: int = 0) -> TestResult:
    """Local-bootstrap test of ``y`` independent of ``s`` given ``z``.

    p-value is ``(1 + #{boot >= observed}) / (B + 1)``.
    """
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=np.int64)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n = len(y)
    if len(s) != n or z.shape[0] != n:
        raise ValueError("y, s and z must have equal lengths")
    if B < 99:
        raise ValueError("B must be at least 99")
    k = int(s.max()) + 1
    onehot = np.eye(k)[s]
    rng = np.random.default_rng(seed)

    live = z.std(axis=0) > 0
    if not live.any():
        log.warning("conditioning variable has zero variance; using an unconditional permutation test")
        weights = np.full((n, n), 1.0 / n)
        observed = float(_local_dcov(weights, y, onehot))
        boot = np.array([_local_dcov(weights, y, onehot[rng.permutation(n)]) for _ in range(B)])
        p = (1 + np.sum(boot >= observed)) / (B + 1)
        return TestResult(observed, float(p), "permutation", {"B": B, "bandwidth": None})

    z = z[:, live]
    h = auto_bandwidth(z) if isinstance(bandwidth, str) else np.broadcast_to(
        np.asarray(bandwidth, dtype=float), (z.shape[1],))
    if np.any(h <= 0):
        raise ValueError("bandwidth must be positive")
    weights = kernel_weights(z, h)
    observed = float(_local_dcov(weights, y, onehot))

    cond = np.cumsum(weights @ onehot, axis=1)  # (n, k) local CDF of s given z_i
    cond[:, -1] = 1.0
    boot = np.empty(B)
    chunk = max(1, 2_000_000 // (n * n))
    for start in range(0, B, chunk):
        stop = min(start + chunk, B)
        u = rng.random((stop - start, n))
        s_star = (u[:, :, None] >= cond[None, :, :]).sum(axis=2)
        boot[start:stop] = _local_dcov(weights, y, np.eye(k)[s_star])
    p = (1 + np.sum(boot >= observed)) / (B + 1)
    return TestResult(observed, float(p), "kernel-local-bootstrap",
                      {"B": B, "bandwidth": h.tolist()})


def kernel_cf_test(data: Dataset, prep: Preprocessor, bandwidth="auto", B: int = 199,
                   seed: int = 0) -> TestResult:
    return kernel_ci_test(data.y, data.s, prep.apply(data.s, data.a), bandwidth, B, seed)


TESTS: dict[str, Callable[..., TestResult]] = {
    "logistic": lambda data, prep, seed=0, B=199: logistic_cf_test(data, prep),
    "kernel": lambda data, prep, seed=0, B=199: kernel_cf_test(data, prep, B=B, seed=seed),
}


# --------------------------------------------------------------------------- power study


@dataclass(frozen=True)
class PowerStudyGrid:
    example: str
    points: Sequence[ScmParams]
    sizes: Sequence[int] = (200, 500)
    replications: int = 200
    alpha: float = ALPHA
    seed: int = 0
    B: int = 199
    oracle_n: int = 20000
    labels: Sequence[str] | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


def replication_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([master, *keys]).generate_state(1, np.uint64)[0])


def power_cell(params: ScmParams, n: int, replications: int, test: str, prep_kind: str,
               alpha: float, seed: int, B: int = 199) -> tuple[int, list[float]]:
    """Rejections and p-values over ``replications`` simulated datasets.

    Replication ``r`` uses the same seed in every cell (common random numbers).
    """
    run = TESTS[test]
    pvals = []
    for r in range(replications):
        rs = replication_seed(seed, r)
        data, _ = simulate(params, n, rs)
        if len(np.unique(data.s)) < params.k:
            pvals.append(1.0)
            continue
        prep = fit_preprocessor(data, prep_kind)
        pvals.append(run(data, prep, seed=rs, B=B).p_value)
    return int(np.sum(np.asarray(pvals) < alpha)), pvals


def power_study(grid: PowerStudyGrid, test: str = "logistic", prep_kind: str = "M",
                progress: Callable[[str], None] | None = None) -> list[dict]:
    """One row per (grid point, n): oracle CF-metric of the generating decision
    rule and the empirical rejection rate at ``alpha``."""
    if test not in TESTS:
        raise ValueError(f"unknown test {test!r}; choose from {sorted(TESTS)}")
    rows = []
    for pi, params in enumerate(grid.points):
        u = draw_exogenous(params, grid.oracle_n, replication_seed(grid.seed, 10_000_019))
        cfm = oracle_cf_metric(params, u)
        label = grid.labels[pi] if grid.labels else str(pi)
        for n in grid.sizes:
            rejections, _ = power_cell(params, n, grid.replications, test, prep_kind,
                                       grid.alpha, grid.seed, grid.B)
            row = {"example": grid.example, "point": label, "n": n, "cf_metric": cfm,
                   "power": rejections / grid.replications, "R": grid.replications,
                   "alpha": grid.alpha, "test": test, "prep": prep_kind,
                   **{f"param.{k}": v for k, v in params_dict(params).items()}}
            rows.append(row)
            if progress:
                progress(f"{grid.example} point={label} n={n} power={row['power']:.3f}")
    return rows
