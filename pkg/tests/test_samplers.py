import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liftmix import AllocationState, Chain, ConditionalParams, Dataset, ModelSpec, VelocityState
from liftmix import init_state
from liftmix.exact import allocation_index, enumerate_target
from liftmix.samplers import (KERNELS, MoveKind, sample_pair, step_cd, step_lifted_pair,
                              step_mg, step_nr, step_qnr, step_r)

from conftest import data_for, small_models

PAIR_KERNELS = ("r", "nr", "qnr")


def _chain(kernel, model, data, seed=0, **kw):
    rng = np.random.default_rng(seed)
    state, vel = init_state("uniform", data, model.K, rng)
    params = ConditionalParams.from_prior(model, rng) if kernel == "cd" else None
    return Chain(kernel, model, data, state, vel, params, **kw), rng


def test_velocity_table_is_antisymmetric():
    v = VelocityState.random(4, 0)
    M = v.matrix()
    assert np.array_equal(M, -M.T)
    assert set(np.abs(M[np.triu_indices(4, 1)])) == {1}
    before = v.V(2, 0)
    v.flip(0, 2)
    assert v.V(2, 0) == -before and v.V(0, 2) == before
    assert v.V(1, 1) == 0
    with pytest.raises(ValueError):
        VelocityState(np.zeros((3, 3)))


@pytest.mark.parametrize("name", ["prior", "gauss", "poisson"])
@pytest.mark.parametrize("kernel", sorted(KERNELS))
def test_chain_keeps_state_consistent(name, kernel):
    model = small_models()[name]
    data = data_for(model, 40, seed=1)
    chain, rng = _chain(kernel, model, data)
    chain.run(5000, rng)
    chain.state.check()
    assert chain.steps == 5000


@pytest.mark.parametrize("kernel", ["mg", "r", "nr", "qnr"])
def test_cost_per_step(kernel):
    model = small_models(K=4)["gauss"]
    data = data_for(model, 30)
    chain, rng = _chain(kernel, model, data)
    cost = chain.run(1234, rng)
    assert cost == 1234 * chain.cost_per_step
    assert chain.cost_per_step == (4 if kernel == "mg" else 2)


def test_cd_cost_counts_allocation_steps_only():
    model = small_models(K=3)["gauss"]
    data = data_for(model, 20)
    chain, rng = _chain("cd", model, data)
    cost = chain.run(5000, rng)
    assert cost % 3 == 0
    # parameter refreshes happen with probability 1 / (n + 1)
    assert 5000 * 3 * 0.9 < cost < 5000 * 3


def test_single_step_outcomes(rng):
    model = small_models(K=3)["gauss"]
    data = data_for(model, 10)
    state, vel = init_state("uniform", data, 3, rng)
    assert step_mg(state, model, data, rng).cost == 3
    assert step_mg(state, model, data, rng).kind is MoveKind.MG_UPDATE
    out = step_r(state, model, data, rng)
    assert out.cost == 2 and out.kind in (MoveKind.PAIR_ACCEPT, MoveKind.PAIR_REJECT,
                                          MoveKind.EMPTY_NOOP)
    out = step_nr(state, vel, model, data, 0.5, rng)
    assert out.cost == 2
    out = step_qnr(state, vel, model, data, 1.0, 0.5, rng)
    assert out.cost == 2 * out.substeps
    params = ConditionalParams.from_prior(model, rng)
    kinds = {step_cd(state, params, model, data, rng).kind for _ in range(200)}
    assert kinds == {MoveKind.CD_ALLOCATION, MoveKind.CD_PARAMS}
    assert params.w.sum() == pytest.approx(1.0)
    state.check()


def test_lifted_move_into_empty_source_flips_direction():
    model = ModelSpec.prior_only([1.0, 1.0])
    data = Dataset.empty(3)
    state = AllocationState([1, 1, 1], 2, data)
    vel = VelocityState.constant(2, 1)  # proposes 0 -> 1 but cluster 0 is empty
    out = step_lifted_pair(state, vel, model, data, (0, 1), 0.0, np.random.default_rng(0))
    assert out.kind is MoveKind.EMPTY_FLIP
    assert vel.V(0, 1) == -1
    assert np.array_equal(state.c, [1, 1, 1])


def test_lifted_pair_rejects_bad_pair(rng):
    model = ModelSpec.prior_only([1.0, 1.0, 1.0])
    data = Dataset.empty(3)
    state, vel = init_state("uniform", data, 3, rng)
    with pytest.raises(ValueError):
        step_lifted_pair(state, vel, model, data, (2, 1), 0.5, rng)


def test_pair_selection_probabilities():
    model = ModelSpec.prior_only(np.ones(4))
    data = Dataset.empty(10)
    state = AllocationState([0, 0, 0, 0, 0, 1, 1, 1, 2, 2], 4, data)
    rng = np.random.default_rng(1)
    draws = 200_000
    freq = {}
    for _ in range(draws):
        p = sample_pair(state, rng)
        freq[p] = freq.get(p, 0) + 1
    counts = state.counts
    for k in range(4):
        for kk in range(k + 1, 4):
            want = (counts[k] + counts[kk]) / (3 * 10)
            got = freq.get((k, kk), 0) / draws
            assert got == pytest.approx(want, abs=4 * np.sqrt(want / draws) + 1e-12)


def test_qnr_block_length_is_geometric():
    model = ModelSpec.prior_only([1.0, 1.0])
    data = Dataset.empty(20)
    rng = np.random.default_rng(2)
    state, vel = init_state("uniform", data, 2, rng)
    s = 0.5
    lengths = [step_qnr(state, vel, model, data, s, 0.0, rng).substeps for _ in range(4000)]
    # with K = 2 the pair always holds all n points
    assert np.mean(lengths) == pytest.approx(20 / s, rel=0.05)


def test_nr_without_refresh_is_persistent():
    """With unit alpha and no data every move is accepted, so n_1 moves monotonically."""
    model = ModelSpec.prior_only([1.0, 1.0])
    n = 50
    data = Dataset.empty(n)
    c = np.array([0] * 25 + [1] * 25)
    state = AllocationState(c, 2, data)
    chain = Chain("nr", model, data, state, VelocityState.constant(2, 1), xi=0.0)
    trace = np.zeros(25, dtype=np.int64)
    chain.run(25, np.random.default_rng(0), trace=trace)
    assert np.array_equal(trace, np.arange(24, -1, -1))


def test_freeze_stops_before_threshold():
    model = ModelSpec.prior_only([1.0, 1.0])
    data = Dataset.empty(100)
    state = AllocationState([0] * 50 + [1] * 50, 2, data)
    chain = Chain("nr", model, data, state, VelocityState.constant(2, 1), xi=0.0)
    chain.run(1000, np.random.default_rng(0), freeze_count=1)
    assert chain.last_done == 49
    assert state.counts.min() == 1


def test_same_seed_same_chain():
    model = small_models()["gauss"]
    data = data_for(model, 30)
    a, ra = _chain("nr", model, data, seed=9)
    b, rb = _chain("nr", model, data, seed=9)
    a.run(3000, ra)
    b.run(3000, rb)
    assert np.array_equal(a.state.c, b.state.c)


def test_chain_argument_checks():
    model = ModelSpec.prior_only([1.0, 1.0])
    data = Dataset.empty(4)
    state = AllocationState([0, 1, 0, 1], 2, data)
    with pytest.raises(ValueError):
        Chain("gibbs", model, data, state)
    with pytest.raises(ValueError):
        Chain("qnr", model, data, state, s=0.0)
    with pytest.raises(ValueError):
        Chain("cd", model, data, state)
    with pytest.raises(ValueError):
        init_state("sideways", data, 2, 0)


def test_init_modes():
    data = Dataset.empty(6)
    s, _ = init_state("all-in-one", data, 3, 0)
    assert np.array_equal(s.counts, [6, 0, 0])
    s, _ = init_state("given", data, 3, 0, given=[2, 2, 1, 0, 0, 0])
    assert np.array_equal(s.counts, [3, 1, 2])
    with pytest.raises(ValueError):
        init_state("given", data, 3, 0, given=[3, 0, 0, 0, 0, 0])


@pytest.mark.parametrize("kernel", ["mg", "r", "nr", "qnr", "cd"])
def test_occupation_matches_exact_target(kernel):
    """Long-run frequencies of c on a 3-point Gaussian instance."""
    model = ModelSpec.gaussian([0.5, 1.5], sigma2=0.5, sigma02=2.0)
    data = Dataset(np.array([[-1.0], [0.2], [1.4]]))
    pi = enumerate_target(model, data, 3)
    chain, rng = _chain(kernel, model, data, seed=4)
    steps = 60_000
    freq = np.zeros(pi.size)
    for _ in range(steps):
        chain.run(1, rng)
        freq[allocation_index(chain.state.c, 2)] += 1
    tv = 0.5 * np.abs(freq / steps - pi).sum()
    assert tv < 0.03


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(KERNELS)), st.integers(2, 5), st.integers(1, 30),
       st.integers(0, 2**32 - 1))
def test_any_run_keeps_counts_and_costs(kernel, K, n, seed):
    model = ModelSpec.gaussian(np.full(K, 0.7))
    data = data_for(model, n, seed)
    chain, rng = _chain(kernel, model, data, seed)
    cost = chain.run(500, rng)
    chain.state.check()
    assert chain.state.counts.sum() == n
    if kernel == "mg":
        assert cost == 500 * K
    elif kernel != "cd":
        assert cost == 1000
