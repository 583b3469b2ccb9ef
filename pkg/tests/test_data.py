import numpy as np
import pytest

from flap.data import (EmptyGroupError, SchemaError, load_csv, parse_schema, schema_for,
                       simple_dataset, split, write_csv)
from flap.scm import Scm2Params, simulate


def _toy(n=10, seed=0):
    rng = np.random.default_rng(seed)
    return simple_dataset(np.arange(n) % 2, rng.normal(size=(n, 2)), rng.integers(0, 2, n))


def test_split_sizes_and_disjoint():
    data = _toy()
    train, test = split(data, 3, seed=7)
    assert (train.n, test.n) == (7, 3)
    rows = {tuple(r) for r in train.a} | {tuple(r) for r in test.a}
    assert len(rows) == 10


def test_split_deterministic():
    data = _toy(50)
    a1, b1 = split(data, 20, seed=3)
    a2, b2 = split(data, 20, seed=3)
    np.testing.assert_array_equal(a1.a, a2.a)
    np.testing.assert_array_equal(b1.y, b2.y)


def test_split_empty_group():
    data = simple_dataset([0, 1, 1, 1], np.arange(4.0), [0, 1, 0, 1])
    with pytest.raises(EmptyGroupError):
        split(data, 3, seed=0)


def test_group_counts_sum():
    data = _toy(31)
    train, test = split(data, 11, seed=1)
    assert train.group_counts.sum() == train.n
    assert test.group_counts.sum() == test.n


def test_missing_value_dropped(tmp_path):
    (tmp_path / "d.csv").write_text("g,x,y\na,1.0,1\nb,,0\nb,3.0,0\n")
    schema = parse_schema("decision = y\nsensitive = g\ncontinuous = x\n")
    data, report = load_csv(tmp_path / "d.csv", schema)
    assert data.n == 2
    assert report.rows_dropped == 1


def test_onehot_blocks(tmp_path):
    (tmp_path / "d.csv").write_text("g,c,y\na,u,1\nb,v,0\na,w,0\nb,u,1\n")
    schema = parse_schema("decision = y\nsensitive = g\ncategorical = c\n")
    data, _ = load_csv(tmp_path / "d.csv", schema)
    assert data.d == 3
    np.testing.assert_array_equal(data.a.sum(axis=1), 1.0)


def test_csv_round_trip(tmp_path):
    data, _ = simulate(Scm2Params(), 200, 5)
    schema = schema_for(data)
    write_csv(data, tmp_path / "x.csv", schema)
    back, _ = load_csv(tmp_path / "x.csv", schema)
    np.testing.assert_array_equal(back.s, data.s)
    np.testing.assert_array_equal(back.a, data.a)
    np.testing.assert_array_equal(back.y, data.y)


def test_schema_errors():
    with pytest.raises(SchemaError):
        parse_schema("sensitive = g\n")
    with pytest.raises(SchemaError):
        parse_schema("decision = y\nsensitive = y\n")
    with pytest.raises(SchemaError):
        parse_schema("decision = y\nsensitive = g\nbogus = 1\n")


def test_schema_levels_and_crossing(tmp_path):
    (tmp_path / "d.csv").write_text(
        "sex,race,x,y\nF,A,1,1\nM,A,2,0\nF,B,3,0\nM,C,4,1\nM,B,5,1\n")
    schema = parse_schema("decision = y\nsensitive = sex, race\nlevels.race = A, B\ncontinuous = x\n")
    data, report = load_csv(tmp_path / "d.csv", schema)
    assert report.rows_filtered == 1
    assert data.k == 4
    assert data.n == 4
