"""Decision datasets: the in-memory model, schema files, CSV ingestion and splits.

A :class:`Dataset` holds one categorical sensitive attribute (several CSV
columns may be crossed into it), a real-valued attribute matrix and binary
decisions. Arrays are frozen after construction.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MISSING_TOKENS = frozenset({"", "?"})
KINDS = ("continuous", "discrete", "onehot")


class SchemaError(ValueError):
    """Schema file is malformed or does not match a CSV header."""


class EmptyGroupError(ValueError):
    """A sensitive group has no rows."""


@dataclass(frozen=True)
class SensitiveGroup:
    id: int
    label: str
    values: tuple[str, ...] = ()


@dataclass(frozen=True)
class Column:
    """One coordinate of the attribute vector.

    One-hot indicators share a ``source`` column and carry their ``level``.
    """

    name: str
    kind: str = "continuous"
    source: str = ""
    level: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown column kind {self.kind!r}")
        if not self.source:
            object.__setattr__(self, "source", self.name)


@dataclass(frozen=True, eq=False)
class Dataset:
    s: np.ndarray
    a: np.ndarray
    y: np.ndarray
    groups: tuple[SensitiveGroup, ...]
    columns: tuple[Column, ...]
    sensitive_columns: tuple[str, ...] = ("s",)
    decision_column: str = "y"

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.int64).reshape(-1)
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        y = np.asarray(self.y)
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("decisions must be exactly 0 or 1")
        y = y.astype(np.int64).reshape(-1)
        n = len(s)
        if a.shape[0] != n or len(y) != n:
            raise ValueError(f"row count mismatch: s={n}, a={a.shape[0]}, y={len(y)}")
        if a.shape[1] != len(self.columns):
            raise ValueError(f"{a.shape[1]} attribute columns but {len(self.columns)} described")
        k = len(self.groups)
        if k < 1:
            raise ValueError("at least one sensitive group is required")
        if [g.id for g in self.groups] != list(range(k)):
            raise ValueError("group ids must be 0..K-1 in order")
        if n and (s.min() < 0 or s.max() >= k):
            raise ValueError("group id out of range")
        counts = np.bincount(s, minlength=k)
        empty = [self.groups[g].label for g in np.flatnonzero(counts == 0)]
        if empty:
            raise EmptyGroupError(f"empty sensitive group(s): {', '.join(empty)}")
        for arr in (s, a, y):
            arr.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "columns", tuple(self.columns))

    def __len__(self) -> int:
        return len(self.s)

    @property
    def n(self) -> int:
        return len(self.s)

    @property
    def d(self) -> int:
        return self.a.shape[1]

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def group_counts(self) -> np.ndarray:
        return np.bincount(self.s, minlength=self.k)

    @property
    def group_probs(self) -> np.ndarray:
        return self.group_counts / self.n

    @property
    def group_labels(self) -> list[str]:
        return [g.label for g in self.groups]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.s[idx], self.a[idx], self.y[idx], self.groups,
                       self.columns, self.sensitive_columns, self.decision_column)

    def with_attributes(self, a: np.ndarray, columns: Sequence[Column] | None = None) -> "Dataset":
        return Dataset(self.s, a, self.y, self.groups,
                       tuple(columns) if columns is not None else self.columns,
                       self.sensitive_columns, self.decision_column)

    def with_decisions(self, y: np.ndarray) -> "Dataset":
        return Dataset(self.s, self.a, y, self.groups, self.columns,
                       self.sensitive_columns, self.decision_column)

    def onehot_blocks(self) -> dict[str, list[int]]:
        blocks: dict[str, list[int]] = {}
        for j, col in enumerate(self.columns):
            if col.kind == "onehot":
                blocks.setdefault(col.source, []).append(j)
        return blocks


def simple_dataset(s, a, y, names: Sequence[str] | None = None, k: int | None = None,
                   group_labels: Sequence[str] | None = None) -> Dataset:
    """Dataset with a single sensitive column ``s`` and continuous attributes."""
    s = np.asarray(s, dtype=np.int64)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if k is None:
        k = int(s.max()) + 1 if len(s) else 1
    if group_labels is None:
        group_labels = [str(g) for g in range(k)]
    if names is None:
        names = [f"a{j + 1}" for j in range(a.shape[1])]
    groups = tuple(SensitiveGroup(g, lab, (lab,)) for g, lab in enumerate(group_labels))
    return Dataset(s, a, y, groups, tuple(Column(n) for n in names))


# --------------------------------------------------------------------------- schema


@dataclass
class DatasetSchema:
    """Column roles and encoding rules for one CSV layout.

    Columns not named in any role are dropped.
    """

    decision: str
    sensitive: list[str]
    continuous: list[str] = field(default_factory=list)
    discrete: list[str] = field(default_factory=list)
    categorical: list[str] = field(default_factory=list)
    positive: list[str] = field(default_factory=lambda: ["1"])
    negative: list[str] = field(default_factory=lambda: ["0"])
    levels: dict[str, list[str]] = field(default_factory=dict)
    merge: dict[str, dict[str, str]] = field(default_factory=dict)
    missing_as_level: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.decision:
            raise SchemaError("exactly one decision column is required")
        if not self.sensitive:
            raise SchemaError("at least one sensitive column is required")
        roles = [self.decision, *self.sensitive, *self.non_sensitive]
        dupes = {c for c in roles if roles.count(c) > 1}
        if dupes:
            raise SchemaError(f"column(s) assigned more than one role: {sorted(dupes)}")
        if set(self.positive) & set(self.negative):
            raise SchemaError("positive and negative decision codes overlap")

    @property
    def non_sensitive(self) -> list[str]:
        return [*self.continuous, *self.discrete, *self.categorical]

    @property
    def used_columns(self) -> list[str]:
        return [*self.sensitive, *self.non_sensitive, self.decision]


_LIST_KEYS = ("sensitive", "continuous", "discrete", "categorical", "positive",
              "negative", "missing_as_level")


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_schema(text: str) -> DatasetSchema:
    """Parse the flat ``key = value`` schema grammar.

    ::

        # comment
        decision = two_year_recid
        positive = 1                      # comma list, default 1
        negative = 0                      # comma list, default 0
        sensitive = sex, race             # crossed into one group id
        levels.race = Caucasian, Hispanic # keep (and order) only these levels
        merge.race.Other = Asian, Native  # relabel levels before filtering
        continuous = age
        discrete = priors_count
        categorical = workclass           # one-hot encoded
        missing_as_level = workclass      # '?'/empty kept as a level
    """
    kwargs: dict = {"levels": {}, "merge": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "decision":
            kwargs["decision"] = value
        elif key in _LIST_KEYS:
            kwargs[key] = _split_list(value)
        elif key.startswith("levels."):
            kwargs["levels"][key[len("levels."):]] = _split_list(value)
        elif key.startswith("merge."):
            parts = key.split(".", 2)
            if len(parts) != 3:
                raise SchemaError(f"line {lineno}: merge key must be merge.<column>.<level>")
            target = kwargs["merge"].setdefault(parts[1], {})
            for old in _split_list(value):
                target[old] = parts[2]
        else:
            raise SchemaError(f"line {lineno}: unknown key {key!r}")
    for required in ("decision", "sensitive"):
        if required not in kwargs:
            raise SchemaError(f"schema is missing '{required}'")
    return DatasetSchema(**kwargs)


def read_schema(path) -> DatasetSchema:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"schema file not found: {path}")
    return parse_schema(path.read_text(encoding="utf-8"))


def format_schema(schema: DatasetSchema) -> str:
    lines = [f"decision = {schema.decision}",
             f"positive = {', '.join(schema.positive)}",
             f"negative = {', '.join(schema.negative)}",
             f"sensitive = {', '.join(schema.sensitive)}"]
    for key in ("continuous", "discrete", "categorical", "missing_as_level"):
        values = getattr(schema, key)
        if values:
            lines.append(f"{key} = {', '.join(values)}")
    for col, levels in schema.levels.items():
        lines.append(f"levels.{col} = {', '.join(levels)}")
    for col, mapping in schema.merge.items():
        targets: dict[str, list[str]] = {}
        for old, new in mapping.items():
            targets.setdefault(new, []).append(old)
        for new, olds in targets.items():
            lines.append(f"merge.{col}.{new} = {', '.join(olds)}")
    return "\n".join(lines) + "\n"


def write_schema(schema: DatasetSchema, path) -> None:
    Path(path).write_text(format_schema(schema), encoding="utf-8")


# --------------------------------------------------------------------------- CSV


@dataclass(frozen=True)
class IngestReport:
    rows_read: int
    rows_dropped: int
    rows_filtered: int
    rows_kept: int


def _parse_float(value: str, column: str, lineno: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"line {lineno}: column {column!r} is not numeric: {value!r}") from None


def load_csv(path, schema: DatasetSchema, like: Dataset | None = None) -> tuple[Dataset, IngestReport]:
    """Read a CSV into a :class:`Dataset`.

    Rows with a missing value (``?`` or empty) in a used column are dropped
    unless the column is listed in ``missing_as_level``. Rows whose sensitive
    value falls outside ``levels.<col>`` are filtered. Pass ``like`` to reuse
    another dataset's group table and one-hot levels (e.g. a separate test
    file); unseen levels then raise.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        position = {}
        for i, name in enumerate(header):
            position.setdefault(name, i)
        missing_cols = [c for c in schema.used_columns if c not in position]
        if missing_cols:
            raise SchemaError(f"{path}: missing column(s) {missing_cols}")
        used = {c: position[c] for c in schema.used_columns}
        keep_missing = set(schema.missing_as_level)
        records: list[dict[str, str]] = []
        rows_read = dropped = filtered = 0
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            rows_read += 1
            rec = {}
            missing = False
            for col, i in used.items():
                value = row[i].strip() if i < len(row) else ""
                if value in MISSING_TOKENS and col not in keep_missing:
                    missing = True
                    break
                rec[col] = value
            if missing:
                dropped += 1
                continue
            for col in schema.sensitive:
                value = schema.merge.get(col, {}).get(rec[col], rec[col])
                rec[col] = value
            if any(col in schema.levels and rec[col] not in schema.levels[col]
                   for col in schema.sensitive):
                filtered += 1
                continue
            rec["__line__"] = str(lineno)
            records.append(rec)

    # decision
    pos, neg = set(schema.positive), set(schema.negative)
    y = np.empty(len(records), dtype=np.int64)
    for i, rec in enumerate(records):
        value = rec[schema.decision]
        if value in pos:
            y[i] = 1
        elif value in neg:
            y[i] = 0
        else:
            raise ValueError(f"line {rec['__line__']}: decision {value!r} is not binary-codable "
                             f"(positive={schema.positive}, negative={schema.negative})")

    # sensitive groups
    if like is not None:
        groups = like.groups
    else:
        per_col = []
        for col in schema.sensitive:
            if col in schema.levels:
                per_col.append(list(schema.levels[col]))
            else:
                per_col.append(sorted({rec[col] for rec in records}))
        groups = tuple(SensitiveGroup(g, "/".join(combo), tuple(combo))
                       for g, combo in enumerate(itertools.product(*per_col)))
    group_id = {g.values: g.id for g in groups}
    s = np.empty(len(records), dtype=np.int64)
    for i, rec in enumerate(records):
        key = tuple(rec[c] for c in schema.sensitive)
        if key not in group_id:
            raise ValueError(f"line {rec['__line__']}: sensitive values {key} not in group table")
        s[i] = group_id[key]

    # attributes
    if like is not None:
        columns = list(like.columns)
    else:
        columns = [Column(c, "continuous") for c in schema.continuous]
        columns += [Column(c, "discrete") for c in schema.discrete]
        for c in schema.categorical:
            for level in sorted({rec[c] for rec in records}):
                columns.append(Column(f"{c}={level}", "onehot", c, level))
    a = np.zeros((len(records), len(columns)))
    index_of = {(col.source, col.level): j for j, col in enumerate(columns)}
    for i, rec in enumerate(records):
        for j, col in enumerate(columns):
            if col.kind != "onehot":
                a[i, j] = _parse_float(rec[col.source], col.source, int(rec["__line__"]))
        for c in schema.categorical:
            j = index_of.get((c, rec[c]))
            if j is None:
                raise ValueError(f"line {rec['__line__']}: unseen level {rec[c]!r} in column {c!r}")
            a[i, j] = 1.0

    data = Dataset(s, a, y, groups, tuple(columns), tuple(schema.sensitive), schema.decision)
    report = IngestReport(rows_read, dropped, filtered, len(records))
    return data, report


def _fmt(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def write_csv(data: Dataset, path, schema: DatasetSchema | None = None,
              extra: dict[str, np.ndarray] | None = None) -> None:
    """Write ``data`` so that ``load_csv`` with the matching schema reloads it.

    One-hot blocks are decoded back to their categorical column. ``extra``
    appends additional numeric columns (ignored on reload).
    """
    pos = schema.positive[0] if schema else "1"
    neg = schema.negative[0] if schema else "0"
    sources: list[str] = []
    for col in data.columns:
        if col.source not in sources:
            sources.append(col.source)
    blocks = data.onehot_blocks()
    extra = extra or {}
    header = [*data.sensitive_columns, *sources, data.decision_column, *extra]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.n):
            row = list(data.groups[data.s[i]].values or (data.groups[data.s[i]].label,))
            for src in sources:
                if src in blocks:
                    j = next(j for j in blocks[src] if data.a[i, j] == 1.0)
                    row.append(data.columns[j].level)
                else:
                    j = next(j for j, c in enumerate(data.columns) if c.source == src)
                    row.append(_fmt(data.a[i, j]))
            row.append(pos if data.y[i] == 1 else neg)
            row.extend(_fmt(v[i]) for v in extra.values())
            writer.writerow(row)


def schema_for(data: Dataset) -> DatasetSchema:
    """Schema that reloads a CSV written by :func:`write_csv` for ``data``."""
    kinds: dict[str, list[str]] = {"continuous": [], "discrete": [], "categorical": []}
    for col in data.columns:
        key = "categorical" if col.kind == "onehot" else col.kind
        if col.source not in kinds[key]:
            kinds[key].append(col.source)
    levels = {}
    for j, col in enumerate(data.sensitive_columns):
        seen: list[str] = []
        for g in data.groups:
            v = (g.values or (g.label,))[j]
            if v not in seen:
                seen.append(v)
        levels[col] = seen
    return DatasetSchema(decision=data.decision_column, sensitive=list(data.sensitive_columns),
                         levels=levels, **kinds)


# --------------------------------------------------------------------------- splits


def split(data: Dataset, test_n: int, seed: int) -> tuple[Dataset, Dataset]:
    """Random train/test split; both parts keep the original row order."""
    if not 0 < test_n < data.n:
        raise ValueError(f"test_n must be in (0, {data.n}), got {test_n}")
    perm = np.random.default_rng(seed).permutation(data.n)
    test_idx = np.sort(perm[:test_n])
    train_idx = np.sort(perm[test_n:])
    return data.subset(train_idx), data.subset(test_idx)


def concat(parts: Iterable[Dataset]) -> Dataset:
    parts = list(parts)
    first = parts[0]
    return Dataset(np.concatenate([p.s for p in parts]), np.vstack([p.a for p in parts]),
                   np.concatenate([p.y for p in parts]), first.groups, first.columns,
                   first.sensitive_columns, first.decision_column)
