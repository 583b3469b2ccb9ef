import numpy as np
import pytest
from scipy import stats

from flap.citest import (CITestError, PowerStudyGrid, TestResult, kernel_ci_test,
                         logistic_cf_test, logistic_lr_test, power_cell, power_study,
                         replication_seed)
from flap.data import simple_dataset
from flap.preprocess import fit_preprocessor
from flap.scm import Scm1Params, simulate


def test_deterministic_dependence():
    rng = np.random.default_rng(0)
    s = rng.integers(0, 2, 500)
    data = simple_dataset(s, rng.normal(size=500), s)
    assert logistic_cf_test(data, fit_preprocessor(data, "M")).p_value < 1e-6


def test_single_group_error():
    data = simple_dataset(np.zeros(20, dtype=int), np.arange(20.0), np.arange(20) % 2)
    with pytest.raises(CITestError):
        logistic_cf_test(data, fit_preprocessor(data, "O"))


def test_result_validates_p():
    with pytest.raises(ValueError):
        TestResult(1.0, 1.5, "x")


def test_logistic_null_uniform():
    p = Scm1Params(sigma_a=1.0, lambda_a=0.0, beta_s=0.0)
    _, pvals = power_cell(p, 500, 500, "logistic", "O", 0.05, seed=11)
    assert stats.kstest(pvals, "uniform").statistic < 0.08


def test_kernel_y_equals_s():
    rng = np.random.default_rng(1)
    s = rng.integers(0, 2, 200)
    res = kernel_ci_test(s, s, rng.normal(size=200), B=199, seed=2)
    assert res.p_value == pytest.approx(1 / 200)


@pytest.mark.slow
def test_kernel_null_calibration():
    rej = 0
    for r in range(500):
        rng = np.random.default_rng(replication_seed(5, r))
        y = rng.integers(0, 2, 200)
        s = rng.integers(0, 2, 200)
        z = rng.normal(size=200)
        rej += kernel_ci_test(y, s, z, B=199, seed=r).p_value < 0.05
    assert 0.03 <= rej / 500 <= 0.08


def test_kernel_constant_z_permutation():
    rng = np.random.default_rng(3)
    res = kernel_ci_test(rng.integers(0, 2, 100), rng.integers(0, 2, 100), np.ones(100), B=99)
    assert res.method == "permutation"


def test_kernel_validation():
    with pytest.raises(ValueError):
        kernel_ci_test([0, 1], [0, 1], [1.0, 2.0], B=10)


def test_lr_monotone_p():
    rng = np.random.default_rng(4)
    s = rng.integers(0, 2, 300)
    z = rng.normal(size=300)
    y = (rng.random(300) < 0.3 + 0.2 * s).astype(int)
    r = logistic_lr_test(y, s, z, 2)
    assert r.p_value == pytest.approx(stats.chi2.sf(r.statistic, 1))


def test_power_study_smoke():
    grid = PowerStudyGrid("ex1", [Scm1Params(lambda_a=0.0, beta_s=1.0)], sizes=(100,),
                          replications=1, oracle_n=500)
    rows = power_study(grid)
    assert rows[0]["power"] in (0.0, 1.0)
    assert rows[0]["cf_metric"] > 0


def test_power_grid_validation():
    with pytest.raises(ValueError):
        PowerStudyGrid("x", [], replications=0)
    with pytest.raises(ValueError):
        PowerStudyGrid("x", [], alpha=1.0)


def test_power_grows_with_n():
    p = Scm1Params(lambda_a=0.0, beta_s=0.75)
    small, _ = power_cell(p, 200, 100, "logistic", "M", 0.05, seed=1)
    large, _ = power_cell(p, 1000, 100, "logistic", "M", 0.05, seed=1)
    assert large >= small
