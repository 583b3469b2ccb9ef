"""Accuracy, CF-metric and CF-bound.

The CF-metric compares a predictor's scores at quantile-matched
counterfactual attributes across every pair of groups. The CF-bound
compares each unit's score with the average score of rank-neighbours in
every other group of the training data, within a window of ``delta``
quantile width.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset
from .learners import Predictor
from .preprocess import MARGINAL_MAPPING, Preprocessor, UnsupportedKindError, counterfactual_attr


@dataclass(frozen=True)
class MetricConfig:
    delta: float = 0.05
    m: int = 50
    seed: int = 0
    max_units: int | None = None

    def __post_init__(self):
        if not 0 <= self.delta <= 1:
            raise ValueError("delta must lie in [0, 1]")
        if self.m < 1:
            raise ValueError("m must be at least 1")


def accuracy(pred: Predictor, test: Dataset, drawn: bool = False,
             rng: np.random.Generator | int | None = None) -> float:
    """Share of test rows whose decision matches the label.

    The default decision is ``score >= 0.5`` (ties go to 1); with
    ``drawn=True`` decisions are Bernoulli(score) draws from ``rng``.
    """
    scores = pred.score(test.s, test.a)
    if drawn:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        decisions = rng.random(len(scores)) < scores
    else:
        decisions = scores >= 0.5
    return float(np.mean(decisions.astype(np.int64) == test.y))


def expected_drawn_accuracy(pred: Predictor, test: Dataset) -> float:
    """Mean of ``p y + (1 - p)(1 - y)``: drawn-decision accuracy without draw noise."""
    p = pred.score(test.s, test.a)
    return float(np.mean(np.where(test.y == 1, p, 1 - p)))


def counterfactual_scores(pred: Predictor, units: Dataset, prep_m: Preprocessor) -> np.ndarray:
    """Scores ``p(r, a_hat(r, s_i, a_i))`` for every group ``r``; shape (K, n)."""
    if prep_m.kind != MARGINAL_MAPPING:
        raise UnsupportedKindError("the CF-metric needs a marginal-mapping preprocessor")
    out = np.empty((prep_m.k, units.n))
    for r in range(prep_m.k):
        a_r = counterfactual_attr(prep_m, r, units.s, units.a)
        out[r] = pred.score(np.full(units.n, r), a_r)
    return out


def cf_metric(pred: Predictor, test: Dataset, prep_m: Preprocessor) -> float:
    """``max_{r,t} mean_i |p(r, a_hat(r, s_i, a_i)) - p(t, a_hat(t, s_i, a_i))|``;
    0 for a single group."""
    scores = counterfactual_scores(pred, test, prep_m)
    best = 0.0
    for r in range(len(scores)):
        for t in range(r + 1, len(scores)):
            best = max(best, float(np.mean(np.abs(scores[r] - scores[t]))))
    return best


# --------------------------------------------------------------------------- ranks


class RankTable:
    """Ascending within-group ranks of training attributes (ties averaged)."""

    def __init__(self, train: Dataset):
        self.k = train.k
        self.d = train.d
        self.counts = train.group_counts
        self.index = [np.flatnonzero(train.s == g) for g in range(self.k)]
        self._sorted = [np.sort(train.a[idx], axis=0) for idx in self.index]
        self.ranks = [self.rank_of(g, train.a[idx]) for g, idx in enumerate(self.index)]

    def rank_of(self, g: int, a: np.ndarray) -> np.ndarray:
        """Average rank of each value among group ``g``'s training values.

        For an observed value this is the usual mid-rank; an unseen value
        gets ``#{below} + 1/2``.
        """
        a = np.atleast_2d(np.asarray(a, dtype=float))
        out = np.empty(a.shape)
        for j in range(self.d):
            col = self._sorted[g][:, j]
            lo = np.searchsorted(col, a[:, j], side="left")
            hi = np.searchsorted(col, a[:, j], side="right")
            out[:, j] = (lo + hi + 1) / 2.0
        return out

    def reference_rank(self, s_ref, a_ref, s_prime: int) -> np.ndarray:
        """Rank of ``a_ref`` within its own group rescaled to group ``s_prime``'s size."""
        s_ref = np.atleast_1d(np.asarray(s_ref, dtype=np.int64))
        a_ref = np.atleast_2d(np.asarray(a_ref, dtype=float))
        out = np.empty(a_ref.shape)
        for g in np.unique(s_ref):
            rows = s_ref == g
            out[rows] = self.rank_of(int(g), a_ref[rows]) * (self.counts[s_prime] / self.counts[g])
        return out


def rank_neighborhood(rt: RankTable, s_prime: int, s_ref: int, a_ref, delta: float) -> np.ndarray:
    """Training-row indices of group ``s_prime`` whose every coordinate rank is
    within ``delta * n_{s'}`` of the reference unit's rescaled rank."""
    ref = rt.reference_rank([s_ref], np.atleast_2d(a_ref), s_prime)[0]
    dist = np.abs(rt.ranks[s_prime] - ref).max(axis=1)
    return rt.index[s_prime][dist <= delta * rt.counts[s_prime]]


class NeighborSampler:
    """Pre-drawn neighbourhood samples shared by every predictor and delta.

    Each (unit, group) pair gets one random priority per candidate row from a
    seed-determined stream; the sample at any delta is the ``m`` eligible rows
    with the smallest priorities, so samples at a smaller delta come from the
    same ordering as those at a larger one. An empty neighbourhood falls back
    to the rows at the smallest maximum coordinate-rank distance (usually a
    single row; more when a coordinate is constant in the group and every
    row is equally far).
    """

    # bound on the (units x rows) distance block held at once
    BLOCK = 4_000_000

    def __init__(self, train: Dataset, units: Dataset, deltas: Sequence[float],
                 m: int = 50, seed: int = 0):
        self.rt = RankTable(train)
        self.units = units
        self.deltas = [float(x) for x in deltas]
        self.m = m
        # samples[delta_index][g] -> (n_units, m) train indices, -1 padded
        self.samples = [[None] * train.k for _ in self.deltas]
        self.fallbacks = [0] * len(self.deltas)
        for g in range(train.k):
            self._draw(g, seed)

    def _draw(self, g: int, seed: int) -> None:
        rt = self.rt
        n_units = self.units.n
        n_g = rt.counts[g]
        take = min(self.m, n_g)
        out = [np.full((n_units, take), -1, dtype=np.int64) for _ in self.deltas]
        ref_all = rt.reference_rank(self.units.s, self.units.a, g)
        chunk = max(1, min(1024, self.BLOCK // n_g))
        ranks_t = np.ascontiguousarray(rt.ranks[g].T)
        for start in range(0, n_units, chunk):
            stop = min(start + chunk, n_units)
            rng = np.random.default_rng([seed, g, start])
            keys = rng.random((stop - start, n_g))
            dist = np.abs(ranks_t[0][None, :] - ref_all[start:stop, 0, None])
            for j in range(1, rt.d):
                np.maximum(dist, np.abs(ranks_t[j][None, :] - ref_all[start:stop, j, None]), out=dist)
            nearest = dist.min(axis=1, keepdims=True)
            for di, delta in enumerate(self.deltas):
                window = np.maximum(delta * n_g, nearest)
                masked = np.where(dist <= window, keys, np.inf)
                if take < n_g:
                    part = np.argpartition(masked, take - 1, axis=1)[:, :take]
                else:
                    part = np.tile(np.arange(n_g), (stop - start, 1))
                chosen = np.take_along_axis(masked, part, axis=1)
                idx = np.where(np.isfinite(chosen), rt.index[g][part], -1)
                self.fallbacks[di] += int(np.sum(nearest[:, 0] > delta * n_g))
                out[di][start:stop] = idx
        for di in range(len(self.deltas)):
            self.samples[di][g] = out[di]

    def bound(self, unit_scores: np.ndarray, train_scores: np.ndarray, delta_index: int) -> float:
        """CF-bound given the predictor's factual scores on units and training rows."""
        best = 0.0
        s = self.units.s
        padded = np.append(train_scores, np.nan)
        for g, idx in enumerate(self.samples[delta_index]):
            others = s != g
            if not others.any():
                continue
            sel = idx[others]
            pbar = np.nanmean(padded[sel], axis=1)
            best = max(best, float(np.max(np.abs(pbar - unit_scores[others]))))
        return best


def _units(train: Dataset, units: Dataset | None, cfg: MetricConfig) -> Dataset:
    units = train if units is None else units
    if cfg.max_units is not None and units.n > cfg.max_units:
        idx = np.sort(np.random.default_rng([cfg.seed, 7]).choice(units.n, cfg.max_units, replace=False))
        units = units.subset(idx) if _all_groups(units, idx) else units
    return units


def _all_groups(units: Dataset, idx: np.ndarray) -> bool:
    return len(np.unique(units.s[idx])) == units.k


def cf_bound(pred: Predictor, train: Dataset, cfg: MetricConfig = MetricConfig(),
             units: Dataset | None = None) -> float:
    """``max_{i, s' != s_i} |pbar(s') - p(s_i, a_i)|`` over ``units`` (default:
    the training rows themselves)."""
    units = _units(train, units, cfg)
    sampler = NeighborSampler(train, units, [cfg.delta], cfg.m, cfg.seed)
    return sampler.bound(pred.score(units.s, units.a), pred.score(train.s, train.a), 0)


def cf_bound_table(preds: Mapping[str, Predictor], train: Dataset, deltas: Sequence[float],
                   cfg: MetricConfig = MetricConfig(), units: Dataset | None = None
                   ) -> dict[tuple[str, float], float]:
    """CF-bound of several predictors at several deltas on shared samples."""
    units = _units(train, units, cfg)
    sampler = NeighborSampler(train, units, deltas, cfg.m, cfg.seed)
    out = {}
    for name, pred in preds.items():
        us = pred.score(units.s, units.a)
        ts = pred.score(train.s, train.a)
        for di, delta in enumerate(sampler.deltas):
            out[(name, delta)] = sampler.bound(us, ts, di)
    return out
