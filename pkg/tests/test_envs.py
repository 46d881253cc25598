import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avgreward.envs import (
    AoiEnv,
    TabularEnv,
    aoi_env,
    delayed_payoff_mdp,
    make_env,
    parse_env_spec,
    random_unichain,
)
from avgreward.errors import CapExceededError, ContractError, EnvSpecError
from avgreward.mdp import Policy, is_unichain
from avgreward.solvers import average_reward


def test_random_unichain_is_unichain_for_all_policies():
    mdp = random_unichain(4, 2, seed=0)
    assert mdp.transition_tensor.min() > 0.0
    assert is_unichain(mdp, Policy.uniform(4, 2))


def test_random_unichain_reproducible():
    a, b = random_unichain(3, 2, seed=9), random_unichain(3, 2, seed=9)
    assert a.to_kernel() == b.to_kernel()


def test_tabular_env_one_hot_and_steps():
    env = TabularEnv(delayed_payoff_mdp())
    assert env.reset() == 0
    assert np.array_equal(env.encode(2), [0.0, 0.0, 1.0])
    assert env.step(1) == (0.0, 1)
    assert env.step(0) == (0.0, 2)
    assert env.step(1) == (10.0, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(2, 6), st.integers(0, 1000))
def test_aoi_state_bounds(K, N, dmax, seed):
    env = AoiEnv(K, N, dmax, seed=seed)
    rng = np.random.default_rng(seed)
    state = env.reset(seed)
    for _ in range(50):
        u, state = env.step(int(rng.integers(env.num_actions)))
        assert all(1 <= e <= dmax for e in state.ecn)
        assert all(1 <= x <= dmax for row in state.user for x in row)
        assert u < 0.0
        x = env.encode(state)
        assert x.shape == (env.feature_dim,) and np.all((x > 0) & (x <= 1))


def test_aoi_transition_rule():
    env = aoi_env(2, 1, 5, request_prob=1.0)
    s0 = env.reset(0)
    u, s1 = env.step(1)  # activate sensor 0
    assert s1.ecn == (1, 2) and s1.user == ((1, 2),)
    assert u == pytest.approx(-((1 + 2) / 2 + 1.5))
    u, s2 = env.step(0)
    assert s2.ecn == (2, 3) and u == pytest.approx(-(2 + 3) / 2)
    assert s0.ecn == (1, 1)


def test_aoi_export_matches_simulation():
    # chi-square check: empirical next-state counts against the exported kernel
    env = aoi_env(1, 2, 3, request_prob=0.5)
    mdp, indexer = env.to_tabular()
    rng = np.random.default_rng(3)
    s_idx, a = 5 % mdp.num_states, 1
    state = indexer.state(s_idx)
    counts = {}
    n = 20_000
    for i in range(n):
        env.state = state
        env.rng = np.random.default_rng(rng.integers(2**32))
        u, nxt = env.step(a)
        key = (indexer.index(nxt), u)
        counts[key] = counts.get(key, 0) + 1
    outcomes = mdp.outcomes(s_idx, a)
    assert set(counts) <= {(ns, u) for ns, u, _ in outcomes}
    chi2 = sum((counts.get((ns, u), 0) - n * p) ** 2 / (n * p) for ns, u, p in outcomes)
    # df <= 3, 99.9% quantile of chi-square(3) is 16.3
    assert chi2 < 16.3


def test_aoi_cap_errors():
    with pytest.raises(CapExceededError, match="request outcome patterns"):
        aoi_env(8, 24, 160).to_tabular()
    with pytest.raises(CapExceededError):
        aoi_env(2, 2, 6).to_tabular(cap=10)


def test_tiny_aoi_export():
    mdp, indexer = aoi_env(1, 1, 4, request_prob=1.0).to_tabular()
    assert mdp.num_states <= 16 and indexer.index(indexer.state(0)) == 0
    assert average_reward(mdp, Policy.deterministic([0, 1, 1, 1][:mdp.num_states],
                                                    2)) == pytest.approx(-2.25)


def test_subspace_features():
    env = aoi_env(2, 2, 10)
    rng = np.random.default_rng(0)
    for i in range(1, 6):
        x = env.subspace_state_features(i, 5, rng) * 10
        assert np.all((x >= 2 * i - 1) & (x <= 2 * i))
    env = aoi_env(1, 1, 4)
    x = env.subspace_state_features(5, 5, rng) * 4
    assert np.all((x >= 1 + 4 * 3 / 5) & (x <= 4))
    with pytest.raises(ContractError):
        env.subspace_state_features(6, 5, rng)


def test_spec_parser():
    assert parse_env_spec("random:S=5,A=2,seed=3") == ("random", {"S": 5, "A": 2, "seed": 3})
    assert parse_env_spec("delayed") == ("delayed", {})
    env = make_env("aoi:K=2,N=1,dmax=4,p=1,energy=2")
    assert env.num_actions == 3 and list(env.energy_costs) == [2.0, 2.0]
    assert make_env("aoi:K=2,N=1,dmax=4,full=1").num_actions == 4
    for bad, field in [("aoi:K=1,N=1", "dmax"), ("aoi:K=1,N=1,dmax=x", "dmax"),
                       ("random:S=2,A=2,q=1", "q"), ("grid:S=1", "grid")]:
        with pytest.raises(EnvSpecError, match=field):
            make_env(bad)
