"""Group-aware attribute preprocessing.

Two fitted maps ``(s, a) -> a'`` that strip group information out of the
non-sensitive attributes:

* orthogonalization: ``a - E_n(A | S=s) + E_n(A)``;
* marginal distribution mapping: every coordinate is pushed through the
  group's empirical CDF and back through each group's empirical quantile
  function, and the results are averaged with weights ``P_n(S=s)``.

ECDFs are right-continuous step functions with jumps equal to empirical mass.
Quantiles follow ``F^{-1}(z) = inf{x : F(x) >= z}``.

Tied values: with ``ties="right"`` a row's level is its ECDF value, so every
copy of an atom sits at the top of the atom. With the default
``ties="average"`` an observed tied value gets its average rank divided by
``n_s``, i.e. the middle of the atom (plus half a step). For distinct values
both rules give the ECDF value ``k / n_s``. They differ only on atoms, where
the top-of-atom level sends e.g. an all-zero indicator to the other groups'
maxima.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, EmptyGroupError

FORMAT_VERSION = 1
# Levels arrive as ratios k/n computed in floating point; comparisons against
# cumulative levels allow this much slack so that k/n >= k/n holds.
LEVEL_EPS = 1e-12

ORTHOGONALIZATION = "orthogonalization"
MARGINAL_MAPPING = "marginal-mapping"
TIES = ("average", "right")
_KIND_ALIASES = {"O": ORTHOGONALIZATION, "o": ORTHOGONALIZATION,
                 ORTHOGONALIZATION: ORTHOGONALIZATION,
                 "M": MARGINAL_MAPPING, "m": MARGINAL_MAPPING,
                 MARGINAL_MAPPING: MARGINAL_MAPPING}


class UnsupportedKindError(TypeError):
    """Operation requires the other preprocessor kind."""


def normalize_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind]
    except KeyError:
        raise ValueError(f"unknown preprocessing kind {kind!r}") from None


def _fsum_columns(a: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(a[:, j]) for j in range(a.shape[1])])


@dataclass(frozen=True, eq=False)
class GroupMoments:
    group_means: np.ndarray   # (K, d)
    overall_mean: np.ndarray  # (d,)
    probs: np.ndarray         # (K,)

    @classmethod
    def fit(cls, data: Dataset) -> "GroupMoments":
        _require_groups(data)
        counts = data.group_counts
        means = np.vstack([_fsum_columns(data.a[data.s == g]) / counts[g] for g in range(data.k)])
        overall = _fsum_columns(data.a) / data.n
        return cls(means, overall, counts / data.n)


@dataclass(frozen=True, eq=False)
class GroupEcdf:
    """Per group and coordinate: sorted distinct values and cumulative counts."""

    values: list[list[np.ndarray]]   # [group][coord] -> ascending distinct values
    cumcounts: list[list[np.ndarray]]  # [group][coord] -> counts of rows <= value
    counts: np.ndarray               # (K,) group sizes
    probs: np.ndarray                # (K,)

    @classmethod
    def fit(cls, data: Dataset) -> "GroupEcdf":
        _require_groups(data)
        values, cumcounts = [], []
        for g in range(data.k):
            rows = data.a[data.s == g]
            gv, gc = [], []
            for j in range(data.d):
                uniq, mult = np.unique(rows[:, j], return_counts=True)
                gv.append(uniq)
                gc.append(np.cumsum(mult))
            values.append(gv)
            cumcounts.append(gc)
        counts = data.group_counts
        return cls(values, cumcounts, counts, counts / data.n)

    @property
    def k(self) -> int:
        return len(self.counts)

    @property
    def d(self) -> int:
        return len(self.values[0])

    def levels(self, s: int, j: int) -> np.ndarray:
        return self.cumcounts[s][j] / self.counts[s]


def _require_groups(data: Dataset) -> None:
    empty = np.flatnonzero(data.group_counts == 0)
    if len(empty):
        raise EmptyGroupError(f"cannot fit with empty group(s) {empty.tolist()}")


def ecdf_eval(g: GroupEcdf, s: int, j: int, x):
    """``P_n(A_j <= x | S = s)``; a multiple of ``1/n_s``."""
    vals = g.values[s][j]
    idx = np.searchsorted(vals, x, side="right")
    cum = np.concatenate([[0], g.cumcounts[s][j]])
    out = cum[idx] / g.counts[s]
    return float(out) if np.ndim(out) == 0 else out


def ecdf_inverse(g: GroupEcdf, s: int, j: int, z):
    """Smallest observed group value whose ECDF is at least ``z``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0) or np.any(z > 1 + LEVEL_EPS):
        raise ValueError("quantile level must lie in (0, 1]")
    idx = np.searchsorted(g.levels(s, j), z - LEVEL_EPS, side="left")
    idx = np.minimum(idx, len(g.values[s][j]) - 1)
    out = g.values[s][j][idx]
    return float(out) if out.ndim == 0 else out


class Preprocessor:
    """A fitted preprocessing map; see :func:`fit_orthogonalization` and
    :func:`fit_marginal_mapping`."""

    def __init__(self, kind: str, moments: GroupMoments | None = None,
                 ecdf: GroupEcdf | None = None, group_labels: Sequence[str] = (),
                 clamp: bool = True, ties: str = "average"):
        if ties not in TIES:
            raise ValueError(f"ties must be one of {TIES}")
        self.kind = normalize_kind(kind)
        self.ties = ties
        self.moments = moments
        self.ecdf = ecdf
        self.group_labels = list(group_labels)
        self.clamp = clamp
        if self.kind == ORTHOGONALIZATION and moments is None:
            raise ValueError("orthogonalization needs fitted moments")
        if self.kind == MARGINAL_MAPPING and ecdf is None:
            raise ValueError("marginal mapping needs fitted ECDFs")

    def __repr__(self) -> str:
        return f"Preprocessor(kind={self.kind!r}, k={self.k}, d={self.d})"

    @property
    def k(self) -> int:
        return len(self.probs)

    @property
    def d(self) -> int:
        return len(self.moments.overall_mean) if self.moments is not None else self.ecdf.d

    @property
    def probs(self) -> np.ndarray:
        return self.moments.probs if self.moments is not None else self.ecdf.probs

    def _check(self, s, a) -> tuple[np.ndarray, np.ndarray]:
        s = np.atleast_1d(np.asarray(s, dtype=np.int64))
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            a = a[None, :] if len(s) == 1 and a.shape[0] == self.d else a[:, None]
        if a.shape[1] != self.d:
            raise ValueError(f"expected {self.d} attribute columns, got {a.shape[1]}")
        if len(s) == 1 and a.shape[0] > 1:
            s = np.full(a.shape[0], s[0])
        if len(s) != a.shape[0]:
            raise ValueError("s and a have different row counts")
        if len(s) and (s.min() < 0 or s.max() >= self.k):
            raise ValueError(f"group id outside 0..{self.k - 1}")
        return s, a

    def apply(self, s, a) -> np.ndarray:
        """Processed attributes for rows ``(s_i, a_i)``; shape (n, d)."""
        s, a = self._check(s, a)
        if self.kind == ORTHOGONALIZATION:
            m = self.moments
            return a - m.group_means[s] + m.overall_mean
        out = np.zeros_like(a)
        for target in range(self.k):
            out += self.probs[target] * self._quantile_map(target, s, a)
        return out

    def transform(self, data: Dataset) -> np.ndarray:
        return self.apply(data.s, data.a)

    def _levels(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        """Level of every coordinate within the row's own group (see module notes)."""
        g = self.ecdf
        z = np.empty_like(a)
        for grp in np.unique(s):
            rows = s == grp
            n_g = g.counts[grp]
            for j in range(self.d):
                x = a[rows, j]
                cum = np.concatenate([[0], g.cumcounts[grp][j]])
                hi = np.searchsorted(g.values[grp][j], x, side="right")
                if self.ties == "average":
                    lo = np.searchsorted(g.values[grp][j], x, side="left")
                    zj = np.where(hi > lo, (cum[lo] + cum[hi] + 1) / (2.0 * n_g), cum[hi] / n_g)
                    first = (cum[1] + 1) / (2.0 * n_g)
                else:
                    zj = cum[hi] / n_g
                    first = cum[1] / n_g
                if self.clamp:
                    zj = np.maximum(zj, first)
                elif np.any(zj <= 0):
                    raise ValueError("value below the group's training support "
                                     "(enable clamping to map it to the first step)")
                z[rows, j] = zj
        return z

    def _quantile_map(self, target: int, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        z = self._levels(s, a)
        return np.column_stack([ecdf_inverse(self.ecdf, target, j, z[:, j]) for j in range(self.d)])

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        out = {"format_version": FORMAT_VERSION, "kind": self.kind,
               "group_labels": self.group_labels, "clamp": self.clamp, "ties": self.ties}
        if self.moments is not None:
            out["moments"] = {"group_means": self.moments.group_means.tolist(),
                              "overall_mean": self.moments.overall_mean.tolist(),
                              "probs": self.moments.probs.tolist()}
        if self.ecdf is not None:
            out["ecdf"] = {"values": [[v.tolist() for v in gv] for gv in self.ecdf.values],
                           "cumcounts": [[c.tolist() for c in gc] for gc in self.ecdf.cumcounts],
                           "counts": self.ecdf.counts.tolist()}
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "Preprocessor":
        if obj.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported preprocessor format {obj.get('format_version')!r}")
        moments = ecdf = None
        if "moments" in obj:
            m = obj["moments"]
            moments = GroupMoments(np.array(m["group_means"], dtype=float),
                                   np.array(m["overall_mean"], dtype=float),
                                   np.array(m["probs"], dtype=float))
        if "ecdf" in obj:
            e = obj["ecdf"]
            counts = np.array(e["counts"], dtype=np.int64)
            ecdf = GroupEcdf([[np.array(v, dtype=float) for v in gv] for gv in e["values"]],
                             [[np.array(c, dtype=np.int64) for c in gc] for gc in e["cumcounts"]],
                             counts, counts / counts.sum())
        return cls(obj["kind"], moments, ecdf, obj.get("group_labels", []), obj.get("clamp", True),
                   obj.get("ties", "average"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Preprocessor":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_orthogonalization(train: Dataset) -> Preprocessor:
    return Preprocessor(ORTHOGONALIZATION, moments=GroupMoments.fit(train),
                        group_labels=train.group_labels)


def fit_marginal_mapping(train: Dataset, clamp: bool = True, ties: str = "average") -> Preprocessor:
    return Preprocessor(MARGINAL_MAPPING, ecdf=GroupEcdf.fit(train),
                        group_labels=train.group_labels, clamp=clamp, ties=ties)


def fit_preprocessor(train: Dataset, kind: str, ties: str = "average") -> Preprocessor:
    kind = normalize_kind(kind)
    if kind == ORTHOGONALIZATION:
        return fit_orthogonalization(train)
    return fit_marginal_mapping(train, ties=ties)


def counterfactual_attr(prep: Preprocessor, target: int, s_star, a_star) -> np.ndarray:
    """Attributes the rows ``(s*, a*)`` would have in group ``target``:
    coordinate-wise quantile matching between the two groups."""
    if prep.kind != MARGINAL_MAPPING:
        raise UnsupportedKindError("counterfactual_attr needs a marginal-mapping preprocessor; "
                                   "use counterfactual_attr_orth for orthogonalization")
    if not 0 <= target < prep.k:
        raise ValueError(f"target group {target} outside 0..{prep.k - 1}")
    s, a = prep._check(s_star, a_star)
    return prep._quantile_map(target, s, a)


def counterfactual_attr_orth(prep: Preprocessor, target: int, s_star, a_star) -> np.ndarray:
    """Mean-shift counterfactual ``a* - E_n(A | s*) + E_n(A | target)``."""
    if prep.kind != ORTHOGONALIZATION:
        raise UnsupportedKindError("counterfactual_attr_orth needs an orthogonalization preprocessor")
    if not 0 <= target < prep.k:
        raise ValueError(f"target group {target} outside 0..{prep.k - 1}")
    s, a = prep._check(s_star, a_star)
    m = prep.moments
    return a - m.group_means[s] + m.group_means[target]
