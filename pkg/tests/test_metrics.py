import numpy as np
import pytest

from flap.data import simple_dataset
from flap.learners import ConstantPredictor, FunctionPredictor, fit_ml
from flap.metrics import (MetricConfig, NeighborSampler, RankTable, accuracy, cf_bound,
                          cf_bound_table, cf_metric, counterfactual_scores,
                          expected_drawn_accuracy, rank_neighborhood)
from flap.pipeline import flap_fit
from flap.preprocess import fit_marginal_mapping
from flap.scm import Scm1Params, Scm2Params, simulate


def test_accuracy_examples():
    y = np.array([1, 0, 1, 1])
    data = simple_dataset([0, 1, 0, 1], np.zeros(4), y)
    perfect = FunctionPredictor(lambda s, a: y.astype(float))
    assert accuracy(perfect, data) == 1.0
    assert accuracy(FunctionPredictor(lambda s, a: 1.0 - y), data) == 0.0
    assert accuracy(ConstantPredictor(0.5), data) == 0.75
    assert expected_drawn_accuracy(ConstantPredictor(0.5), data) == 0.5


def test_cf_metric_degenerate_cases():
    train, _ = simulate(Scm1Params(), 500, 1)
    assert cf_metric(ConstantPredictor(0.4), train, fit_marginal_mapping(train)) == 0.0
    one = simple_dataset(np.zeros(train.n, dtype=int), train.a, train.y)
    assert cf_metric(fit_ml(one), one, fit_marginal_mapping(one)) == 0.0


def test_cf_metric_k2_reduction():
    train, _ = simulate(Scm1Params(sigma_a=2.0), 800, 2)
    test, _ = simulate(Scm1Params(sigma_a=2.0), 400, 3)
    pred = fit_ml(train)
    sc = counterfactual_scores(pred, test, fit_marginal_mapping(train))
    assert cf_metric(pred, test, fit_marginal_mapping(train)) == pytest.approx(
        np.mean(np.abs(sc[0] - sc[1])), abs=0)


def test_cf_metric_k3_is_pairwise_max():
    train, _ = simulate(Scm2Params(lambda_a1=-0.2, lambda_a2=-0.4, beta_1=1), 1500, 4)
    pred = fit_ml(train)
    prep = fit_marginal_mapping(train)
    sc = counterfactual_scores(pred, train, prep)
    pairs = [np.mean(np.abs(sc[r] - sc[t])) for r in range(3) for t in range(3) if r != t]
    assert cf_metric(pred, train, prep) == pytest.approx(max(pairs))


def test_ml_exceeds_flap_m():
    p = Scm1Params(beta_s=1.0, sigma_a=2.0)
    train, _ = simulate(p, 5000, 5)
    test, _ = simulate(p, 5000, 6)
    prep = fit_marginal_mapping(train)
    ml = cf_metric(fit_ml(train), test, prep)
    fm = cf_metric(flap_fit(train, "M", "AML"), test, prep)
    assert ml > 0 and ml >= 10 * fm


def test_rank_table_and_neighborhood():
    rng = np.random.default_rng(0)
    a = rng.permutation(20).astype(float)
    s = np.r_[np.zeros(10), np.ones(10)].astype(int)
    data = simple_dataset(s, a, np.zeros(20, dtype=int))
    rt = RankTable(data)
    for g in (0, 1):
        assert rt.ranks[g].min() == 1 and rt.ranks[g].max() == 10
    assert len(rank_neighborhood(rt, 1, 0, data.a[0], 1.0)) == 10
    got = rank_neighborhood(rt, 1, 0, data.a[0], 0.0)
    assert len(got) == 1
    assert rt.ranks[1][np.flatnonzero(rt.index[1] == got[0])[0], 0] == rt.rank_of(0, data.a[:1])[0, 0]


def test_rank_ties_averaged():
    data = simple_dataset([0, 0, 0, 1], [1.0, 1.0, 2.0, 0.0], [0, 0, 0, 0])
    rt = RankTable(data)
    np.testing.assert_array_equal(rt.ranks[0][:, 0], [1.5, 1.5, 3.0])


def test_cf_bound_constant_zero():
    train, _ = simulate(Scm1Params(), 400, 7)
    assert cf_bound(ConstantPredictor(0.7), train) < 1e-12


def test_cf_bound_delta_one_dominates():
    train, _ = simulate(Scm2Params(lambda_e1=-0.3, lambda_e2=-0.6), 600, 8)
    preds = {"ml": fit_ml(train), "flap": flap_fit(train, "M", "AML")}
    tab = cf_bound_table(preds, train, [0.05, 1.0])
    for name in preds:
        assert tab[(name, 1.0)] >= tab[(name, 0.05)] - 1e-12
        assert 0 <= tab[(name, 0.05)] <= 1


def test_sampler_nested_and_deterministic():
    train, _ = simulate(Scm1Params(), 300, 9)
    a = NeighborSampler(train, train, [0.05, 0.2, 1.0], m=20, seed=3)
    b = NeighborSampler(train, train, [0.05, 0.2, 1.0], m=20, seed=3)
    for g in range(train.k):
        np.testing.assert_array_equal(a.samples[0][g], b.samples[0][g])
        assert a.samples[2][g].shape[1] == 20


def test_metric_config_validation():
    with pytest.raises(ValueError):
        MetricConfig(delta=1.5)
    with pytest.raises(ValueError):
        MetricConfig(m=0)


def test_cf_bound_empty_window_falls_back():
    # a constant coordinate in the target group: every row is equally far
    s = np.r_[np.zeros(5), np.ones(5)].astype(int)
    a = np.c_[np.r_[np.arange(5.0), np.zeros(5)], np.arange(10.0)]
    data = simple_dataset(s, a, np.zeros(10, dtype=int))
    sampler = NeighborSampler(data, data, [0.0], m=50, seed=0)
    assert sampler.fallbacks[0] > 0
    assert np.all((sampler.samples[0][1] >= 0).sum(axis=1) >= 1)
