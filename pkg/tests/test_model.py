import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from liftmix import AllocationState, Dataset, ModelKind, ModelSpec
from liftmix.exact import log_target
from liftmix.model import (ClusterStats, cond_probs, log_accept_ratio, log_cond_weights,
                           log_predictive, simulate_dataset, simulate_fixed_mixture)

from conftest import data_for, small_models


def test_model_validation():
    with pytest.raises(ValueError):
        ModelSpec.prior_only([1.0])
    with pytest.raises(ValueError):
        ModelSpec.prior_only([1.0, 0.0])
    with pytest.raises(ValueError):
        ModelSpec.gaussian([1.0, 1.0], sigma2=0.0)
    with pytest.raises(ValueError):
        ModelSpec.poisson([1.0, 1.0], beta1=-1.0)


def test_gaussian_predictive_matches_normal_density():
    m = ModelSpec.gaussian([1.0, 1.0], theta0=[0.5, -1.0], sigma2=0.8, sigma02=2.0)
    cluster = np.array([[0.1, 0.2], [1.3, -0.4], [0.7, 2.0]])
    y = np.array([0.4, 0.9])
    prec = 1 / 2.0 + 3 / 0.8
    mean = (np.array([0.5, -1.0]) / 2.0 + cluster.sum(0) / 0.8) / prec
    want = stats.norm.logpdf(y, mean, np.sqrt(0.8 + 1 / prec)).sum()
    got = log_predictive(m, ClusterStats(3, cluster.sum(0)), y)
    assert got == pytest.approx(want, abs=1e-12)


def test_gaussian_predictive_empty_cluster_is_prior_predictive():
    m = ModelSpec.gaussian([1.0, 1.0], theta0=0.2, sigma2=1.5, sigma02=0.5)
    got = log_predictive(m, ClusterStats(0, [0.0]), [1.1])
    assert got == pytest.approx(stats.norm.logpdf(1.1, 0.2, math.sqrt(2.0)), abs=1e-12)


def test_poisson_predictive_is_negative_binomial():
    m = ModelSpec.poisson([1.0, 1.0], beta1=2.5, beta2=0.7)
    cluster = np.array([3.0, 0.0, 5.0, 2.0])
    for y in range(6):
        got = log_predictive(m, ClusterStats(4, [cluster.sum()]), [float(y)])
        p = (0.7 + 4) / (0.7 + 4 + 1)
        want = stats.nbinom.logpmf(y, 2.5 + cluster.sum(), p)
        assert got == pytest.approx(want, abs=1e-12)


def test_prior_predictive_is_zero():
    m = ModelSpec.prior_only([1.0, 2.0])
    assert log_predictive(m, ClusterStats(4), []) == 0.0


@pytest.mark.parametrize("name", ["prior", "gauss", "poisson"])
def test_full_conditional_matches_enumerated_target(name):
    model = small_models()[name]
    n = 6
    data = data_for(model, n, seed=3)
    rng = np.random.default_rng(0)
    c = rng.integers(0, model.K, n)
    state = AllocationState(c, model.K, data)
    for i in range(n):
        configs = np.repeat(c[None, :], model.K, axis=0)
        configs[:, i] = np.arange(model.K)
        lp = log_target(model, data, configs)
        want = np.exp(lp - lp.max())
        want /= want.sum()
        assert np.allclose(cond_probs(model, state, data, i), want, atol=1e-12)


@pytest.mark.parametrize("name", ["prior", "gauss", "poisson"])
def test_accept_ratio_matches_target_ratio(name):
    model = small_models()[name]
    n = 7
    data = data_for(model, n, seed=4)
    c = np.array([0, 0, 1, 2, 2, 2, 0])
    state = AllocationState(c, model.K, data)
    for i in range(n):
        km = c[i]
        for kp in range(model.K):
            if kp == km:
                continue
            cp = c.copy()
            cp[i] = kp
            lp = log_target(model, data, np.stack([c, cp]))
            nm, npl = np.bincount(c, minlength=model.K)[[km, kp]]
            want = math.log(nm / (npl + 1)) + lp[1] - lp[0]
            assert log_accept_ratio(model, state, data, i, km, kp) == pytest.approx(want, abs=1e-10)


def test_accept_ratio_rejects_bad_arguments():
    model = ModelSpec.prior_only([1.0, 1.0])
    state = AllocationState([0, 1], 2, Dataset.empty(2))
    with pytest.raises(ValueError):
        log_accept_ratio(model, state, Dataset.empty(2), 0, 1, 0)
    with pytest.raises(ValueError):
        log_accept_ratio(model, state, Dataset.empty(2), 0, 0, 0)


def test_prior_accept_ratio_cancels_to_one_for_unit_alpha():
    model = ModelSpec.prior_only(np.ones(3))
    c = np.array([0, 0, 0, 1, 2])
    state = AllocationState(c, 3, Dataset.empty(5))
    for i in range(5):
        for kp in range(3):
            if kp != c[i]:
                assert log_accept_ratio(model, state, Dataset.empty(5), i, c[i], kp) == \
                    pytest.approx(0.0, abs=1e-14)


def test_conditional_weights_for_prior_are_alpha_plus_counts():
    model = ModelSpec.prior_only([0.5, 1.5, 3.0])
    c = np.array([0, 1, 1, 2, 2, 2])
    state = AllocationState(c, 3, Dataset.empty(6))
    lw = log_cond_weights(model, state, Dataset.empty(6), 3)
    w = np.exp(lw - lw.max())
    want = np.array([0.5 + 1, 1.5 + 2, 3.0 + 2])
    assert np.allclose(w / w.sum(), want / want.sum())


def test_state_rejects_bad_labels():
    with pytest.raises(ValueError):
        AllocationState([0, 3], 3, Dataset.empty(2))
    with pytest.raises(ValueError):
        AllocationState([0, 1, 1], 3, Dataset.empty(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_incremental_statistics_stay_consistent(n, K, seed):
    rng = np.random.default_rng(seed)
    data = Dataset(rng.normal(size=(n, 2)))
    state = AllocationState(rng.integers(0, K, n), K, data)
    for _ in range(100):
        state.move_point(int(rng.integers(n)), int(rng.integers(K)))
    state.check()
    assert state.counts.sum() == n
    assert state.proportions().sum() == pytest.approx(1.0, abs=1e-15)


def test_copy_is_independent():
    data = Dataset(np.arange(4.0)[:, None])
    s = AllocationState([0, 1, 0, 1], 2, data)
    t = s.copy()
    t.move_point(0, 1)
    assert s.c[0] == 0 and t.c[0] == 1
    s.check()
    t.check()


def test_dataset_csv_round_trip(tmp_path):
    d = Dataset(np.array([[1.5, -2.0], [0.25, 3.0]]))
    d.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv")
    assert np.array_equal(back.Y, d.Y)


def test_dataset_is_read_only():
    d = Dataset(np.zeros((3, 1)))
    with pytest.raises(ValueError):
        d.Y[0, 0] = 1.0


def test_simulate_dataset_shapes_and_determinism():
    m = ModelSpec.gaussian([1.0, 1.0, 1.0], dim=2)
    a = simulate_dataset(m, 50, 7)
    b = simulate_dataset(m, 50, 7)
    assert a.data.Y.shape == (50, 2)
    assert np.array_equal(a.data.Y, b.data.Y)
    assert a.weights.sum() == pytest.approx(1.0)
    p = simulate_dataset(ModelSpec.poisson([1.0, 1.0]), 30, 1)
    assert np.all(p.data.Y == np.round(p.data.Y)) and np.all(p.data.Y >= 0)
    assert simulate_dataset(ModelSpec.prior_only([1.0, 1.0]), 5, 0).data.Y.shape == (5, 0)


def test_fixed_mixture_weights():
    sim = simulate_fixed_mixture([0.9, 0.1], [0.9, -0.9], 1.0, 20000, 0)
    assert np.mean(sim.labels == 0) == pytest.approx(0.9, abs=0.01)
    assert sim.data.Y.mean() == pytest.approx(0.9 * 0.9 - 0.1 * 0.9, abs=0.03)


def test_model_kind_names():
    assert ModelSpec.prior_only([1, 1]).kind is ModelKind.PRIOR_ONLY
