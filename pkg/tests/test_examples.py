"""Small worked examples for each public operation, with hand-derived or
oracle-derived expected values."""
import numpy as np
import pytest

from avgreward.deep import (
    Batch,
    DeepAgentConfig,
    act,
    ddr_learn_batch,
    ddrviq_targets,
    dqn_learn_batch,
    dqn_targets,
    evaluate_policy,
    train_deep,
)
from avgreward.envs import TabularEnv, aoi_env, delayed_payoff_mdp, random_unichain
from avgreward.harness import (
    ExperimentConfig,
    aggregate_envelope,
    gap_report,
    run_experiment,
    summarize_tail,
)
from avgreward.kernels import python_backend
from avgreward.mdp import (
    Policy,
    TabularMdp,
    chain_is_unichain,
    enumerate_det_policies,
    induced_chain,
    is_unichain,
    stationary_distribution,
    validate,
)
from avgreward.neural import (
    Adam,
    Sgd,
    backward_batch,
    forward,
    init_params,
    sync_target,
    zero_params,
)
from avgreward.records import RunRecord
from avgreward.solvers import (
    abel_limit_profile,
    average_reward,
    brute_force_gain_optimal,
    discounted_value_iteration,
    discounted_values,
    identity_residual,
    relative_value_iteration,
)
from avgreward.tabular import (
    LearningConfig,
    ValueStore,
    epsilon_greedy,
    q_learning_update,
    r_learning_avg_update,
    r_learning_update,
    rvi_q_update,
    train_tabular,
)

ONE = TabularMdp.from_kernel([[[(0, 1.0, 1.0)]]])
ONE_2A = TabularMdp.from_kernel([[[(0, 1.0, 1.0)], [(0, 1.0, 1.0)]]])
SWITCH = TabularMdp.from_kernel([[[(0, 0.0, 1.0)], [(1, 0.0, 1.0)]],
                                 [[(1, 0.0, 1.0)], [(0, 0.0, 1.0)]]])
DELAYED = delayed_payoff_mdp()
X = Policy.deterministic([0, 0, 0], 2)  # stay on the reward-1 self-loop
Y = Policy.deterministic([1, 0, 0], 2)  # 3-cycle with rewards 0, 0, 10


def rollout_mean(mdp, actions, start, horizon=100_000, burn_in=1_000, seed=0):
    noise = np.random.default_rng(seed).random(horizon)
    mean, _ = python_backend.rollout(np.asarray(actions, dtype=np.int64), start, mdp.offsets,
                                     mdp.next_state, mdp.reward, mdp.cumulative_prob, noise,
                                     burn_in)
    return mean


# model


def test_validate_examples():
    assert validate(ONE) == []
    half = TabularMdp.from_kernel([[[(0, 0.0, 0.5), (0, 1.0, 0.4)]]], check=False)
    assert any("probabilities sum to 0.9" in m for m in validate(half))
    out = TabularMdp.from_kernel([[[(1, 0.0, 1.0)]]], check=False)
    assert any("state index out of range" in m for m in validate(out))


def test_induced_chain_examples():
    P, r = induced_chain(ONE, Policy.deterministic([0], 1))
    assert P.tolist() == [[1.0]] and r.tolist() == [1.0]
    P, _ = induced_chain(SWITCH, Policy.uniform(2, 2))
    assert P.tolist() == [[0.5, 0.5], [0.5, 0.5]]
    _, r = induced_chain(DELAYED, Y)
    assert r.tolist() == [0.0, 0.0, 10.0]
    # enumerate outcomes by hand as the cross-check
    expect = [sum(p * u for _, u, p in DELAYED.outcomes(s, a)) for s, a in enumerate(Y.actions)]
    assert r.tolist() == expect


def test_stationary_examples():
    assert stationary_distribution(np.array([[1.0]])).mu.tolist() == [1.0]
    assert np.allclose(stationary_distribution(np.full((2, 2), 0.5)).mu, [0.5, 0.5])
    P, _ = induced_chain(DELAYED, Y)
    mu = stationary_distribution(P).mu
    lazy, power = 0.5 * (np.eye(3) + P), np.array([1.0, 0.0, 0.0])
    for _ in range(500):
        power = power @ lazy
    assert np.allclose(mu, [1 / 3] * 3, atol=1e-12) and np.allclose(power, mu, atol=1e-12)


def test_unichain_examples():
    assert chain_is_unichain(np.array([[1.0]]))
    assert not chain_is_unichain(np.eye(2))
    mdp = random_unichain(5, 3, seed=2)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert is_unichain(mdp, Policy(rng.dirichlet(np.ones(3), size=5)))
    assert is_unichain(TabularMdp.from_kernel([[[(0, 0.0, 1.0)]]]), Policy.uniform(1, 1))


def test_policy_counts():
    assert len(list(enumerate_det_policies(ONE_2A))) == 2
    assert len(list(enumerate_det_policies(DELAYED))) == 8
    assert len(list(enumerate_det_policies(random_unichain(5, 3, seed=0)))) == 243


def test_random_unichain_bit_identical():
    a, b = random_unichain(4, 3, seed=17), random_unichain(4, 3, seed=17)
    for f in ("offsets", "next_state", "reward", "prob"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


# exact solvers


def test_average_reward_examples():
    assert average_reward(ONE, Policy.deterministic([0], 1)) == 1.0
    assert average_reward(DELAYED, X) == pytest.approx(1.0, abs=1e-12)
    assert average_reward(DELAYED, Y) == pytest.approx(10 / 3, abs=1e-12)
    assert rollout_mean(DELAYED, X.actions, 0) == pytest.approx(1.0)
    # deterministic 3-cycle: horizon remainder keeps the estimate within 10/horizon
    assert rollout_mean(DELAYED, Y.actions, 0) == pytest.approx(10 / 3, abs=1e-3)


def test_gain_is_start_state_independent():
    mdp = random_unichain(4, 2, seed=6)
    actions = [1, 0, 1, 1]
    gain = average_reward(mdp, Policy.deterministic(actions, 2))
    for start in range(4):
        samples = [rollout_mean(mdp, actions, start, 20_000, 1_000, seed=k) for k in range(10)]
        sigma = np.std(samples) / np.sqrt(len(samples))
        assert abs(np.mean(samples) - gain) <= 3 * sigma + 1e-12


def test_discounted_value_examples():
    pol = Policy.deterministic([0], 1)
    assert discounted_values(ONE, pol, 0.5) == pytest.approx([2.0])
    assert discounted_values(ONE, pol, 0.9) == pytest.approx([10.0])
    v = discounted_values(DELAYED, Y, 0.1)
    assert v[0] == pytest.approx(10 * 0.1**2 / (1 - 0.1**3), rel=1e-12)
    # iterative evaluation oracle
    P, r = induced_chain(DELAYED, Y)
    it = np.zeros(3)
    for _ in range(100):
        it = r + 0.1 * P @ it
    assert np.allclose(v, it, atol=1e-12)


def test_identity_residual_examples():
    assert identity_residual(ONE, Policy.deterministic([0], 1), 0.5) == 0.0
    assert identity_residual(DELAYED, Y, 0.1) <= 1e-10


def test_discounted_vi_examples():
    sol = discounted_value_iteration(ONE, 0.9)
    assert sol.values == pytest.approx([10.0])
    assert discounted_value_iteration(DELAYED, 0.1).policy.actions[0] == 0
    assert discounted_value_iteration(DELAYED, 0.9).policy.actions[0] == 1
    assert discounted_values(DELAYED, X, 0.1)[0] == pytest.approx(1 / 0.9)
    assert discounted_values(DELAYED, Y, 0.9)[0] == pytest.approx(81 / 2.71)


def test_rvi_examples():
    sol = relative_value_iteration(ONE)
    assert sol.gain == pytest.approx(1.0) and sol.bias.tolist() == [0.0]
    sol = relative_value_iteration(DELAYED)
    assert sol.gain == pytest.approx(10 / 3, abs=1e-9) and sol.policy.actions[0] == 1
    mdp = random_unichain(5, 3, seed=7)
    assert relative_value_iteration(mdp).gain == pytest.approx(
        brute_force_gain_optimal(mdp)[1], abs=1e-6)


def test_brute_force_examples():
    pol, gain = brute_force_gain_optimal(ONE)
    assert gain == 1.0 and pol.key == "0"
    pol, gain = brute_force_gain_optimal(DELAYED)
    assert pol.actions[0] == 1 and gain == pytest.approx(10 / 3)
    pol, gain = brute_force_gain_optimal(TabularMdp.from_kernel(
        [[[(1, 1.0, 1.0)], [(1, 1.0, 1.0)]], [[(0, 0.0, 1.0)], [(0, 0.0, 1.0)]]]))
    assert gain == pytest.approx(0.5)


def test_abel_profile_examples():
    prof = abel_limit_profile(ONE, Policy.deterministic([0], 1), [0.1, 0.9])
    assert all(dev == pytest.approx(0.0, abs=1e-12) for _, dev in prof)
    prof = dict(abel_limit_profile(DELAYED, Y, [0.5, 0.9, 0.99, 0.999]))
    assert prof[0.999] < prof[0.5]
    mdp = random_unichain(5, 2, seed=1)
    pol = Policy.uniform(5, 2)
    (_, dev), = abel_limit_profile(mdp, pol, [0.999])
    assert dev <= 0.01 * (1 + abs(average_reward(mdp, pol)))


def test_gap_examples():
    rows = gap_report(DELAYED, [0.1, 0.9])
    assert rows[0].gap == pytest.approx(7 / 3, abs=1e-12) and rows[0].average_reward == 1.0
    assert rows[1].gap == pytest.approx(0.0, abs=1e-12)
    assert all(r.gap == 0.0 for r in gap_report(ONE, [0.1, 0.5, 0.99]))


# tabular learners


def test_epsilon_greedy_examples():
    rng = np.random.default_rng(0)
    assert epsilon_greedy(np.array([1.0, 3.0, 2.0]), 0.0, rng) == 1
    assert epsilon_greedy(np.array([5.0, 5.0]), 0.0, rng) == 0
    counts = np.bincount([epsilon_greedy(np.array([0.0, 9.0, 1.0, 2.0]), 1.0, rng)
                          for _ in range(10_000)], minlength=4)
    chi2 = float(((counts - 2500.0) ** 2 / 2500.0).sum())
    assert chi2 < 16.27  # 99.9% quantile of chi-square(3)


def test_q_learning_examples():
    store = ValueStore.zeros(1, 1)
    q_learning_update(store, 0, 0, 1.0, 0, 0.5, 1.0)
    assert store.table[0, 0] == 1.0
    before = store.table.copy()
    q_learning_update(store, 0, 0, 5.0, 0, 0.5, 0.0)
    assert np.array_equal(store.table, before)
    store = ValueStore.zeros(1, 1)
    train_tabular("q", ONE, LearningConfig(gamma=0.5, alpha=0.1, steps=10_000,
                                           eval_every=10_000, eval_horizon=200), store=store)
    assert store.table[0, 0] == pytest.approx(2.0, abs=1e-3)


def test_rvi_q_examples():
    store = ValueStore.zeros(2, 2)
    rvi_q_update(store, 0, 1, 1.0, 1, 0, 1.0)
    assert store.table[0, 1] == 1.0
    store = ValueStore.zeros(1, 1)
    for _ in range(1_000):
        rvi_q_update(store, 0, 0, 3.0, 0, 0, 1.0)
        assert abs(store.table[0, 0]) <= 3.0


def test_rvi_q_finds_optimal_policy():
    hits = 0
    for seed in range(20):
        mdp = random_unichain(4, 2, seed=seed)
        store = ValueStore.zeros(4, 2)
        train_tabular("rviq", mdp, LearningConfig(alpha=0.1, alpha_final=0.0005,
                                                  alpha_decay_steps=200_000, epsilon=0.5,
                                                  steps=200_000, eval_every=200_000,
                                                  eval_horizon=1_000, seed=seed), store=store)
        hits += Policy.deterministic(np.argmax(store.table, axis=1), 2) == \
            brute_force_gain_optimal(mdp)[0]
    assert hits >= 18


def test_r_learning_update_examples():
    store = ValueStore.zeros(1, 1, average=True)
    r_learning_update(store, 0, 0, 1.0, 0, 1.0)
    assert store.table[0, 0] == 1.0
    store = ValueStore(np.array([[2.0, 2.0]]), 1.0)
    r_learning_update(store, 0, 0, 1.0, 0, 0.5)
    assert store.table[0, 0] == 2.0
    store = ValueStore(np.array([[0.3]]), 1.0)
    for _ in range(2_000):
        r_learning_update(store, 0, 0, 1.0, 0, 0.1)
        assert abs(store.table[0, 0]) < 10.0


def test_r_learning_average_examples():
    store = ValueStore(np.array([[0.0]]), 0.0)
    r_learning_avg_update(store, 0, 0, 1.0, 0, 0.5)
    assert store.u_tilde == 0.5
    store = ValueStore(np.array([[0.0, 1.0], [0.0, 0.0]]), 0.2)
    r_learning_avg_update(store, 0, 0, 1.0, 1, 0.5)
    assert store.u_tilde == 0.2
    store = ValueStore.zeros(1, 1, average=True)
    train_tabular("rlearn", ONE, LearningConfig(alpha_u=0.05, steps=10_000, eval_every=10_000,
                                                eval_horizon=200), store=store)
    assert store.u_tilde == pytest.approx(1.0, abs=1e-2)


def test_train_tabular_examples():
    rec = train_tabular("rlearn", ONE, LearningConfig(steps=0))
    assert rec.steps == [] and rec.eval_avg_reward == []
    rec = train_tabular("rlearn", ONE, LearningConfig(steps=500, eval_every=500,
                                                      eval_horizon=300))
    assert rec.eval_avg_reward[-1] == 1.0
    mdp = random_unichain(5, 2, seed=3)
    rec = train_tabular("rlearn", mdp, LearningConfig(alpha=0.1, alpha_final=0.005,
                                                      alpha_decay_steps=200_000, alpha_u=0.001,
                                                      epsilon=0.2, steps=200_000,
                                                      eval_every=200_000, eval_horizon=100_000))
    gain = brute_force_gain_optimal(mdp)[1]
    assert rec.eval_avg_reward[-1] == pytest.approx(gain, rel=0.02)


# neural network


def test_forward_examples():
    params = zero_params(3, 2, hidden=(4,))
    assert forward(params, np.ones(3)).tolist() == [0.0, 0.0]
    params = init_params(3, 2, hidden=(4,), seed=0)
    x = np.array([0.1, 0.2, -0.3])
    shifted = params.copy()
    shifted.biases[-2] += 1.5
    assert np.allclose(forward(shifted, x) - forward(params, x), 1.5, atol=1e-14)


def test_backward_examples():
    params = init_params(3, 2, hidden=(4,), seed=1)
    x = np.array([[0.3, -0.1, 0.7]])
    q = forward(params, x)[0]
    loss, grads = backward_batch(params, x, [1], [q[1]])
    assert loss == 0.0 and all(not g.any() for g in grads.tensors())


def test_backward_hand_derived_without_trunk():
    # no hidden layers: q = x Wv + bv + x Wa + ba - mean(x Wa + ba)
    params = init_params(3, 2, hidden=(), seed=2)
    x = np.array([0.5, -1.0, 2.0])
    q = forward(params, x)
    a, y = 0, 0.25
    err = q[a] - y
    _, grads = backward_batch(params, x[None, :], [a], [y])
    centred = np.array([1.0, 0.0]) - 0.5
    assert np.allclose(grads.weights[0], err * x[:, None])
    assert np.allclose(grads.biases[0], [err])
    assert np.allclose(grads.weights[1], err * np.outer(x, centred))
    assert np.allclose(grads.biases[1], err * centred)


def test_optimizer_examples():
    params = init_params(2, 2, hidden=(3,), seed=0)
    before = params.copy()
    _, grads = backward_batch(params, np.ones((1, 2)), [0], [5.0])
    Sgd(0.0).step(params, grads)
    assert params.allclose(before)
    p = zero_params(1, 1, hidden=())
    p.biases[0][:] = 1.0
    g = p.zeros_like()
    g.biases[0][:] = 2.0
    Sgd(0.1).step(p, g)
    assert p.biases[0][0] == pytest.approx(0.8)
    before = params.copy()
    Adam(0.1).step(params, params.zeros_like())
    assert params.allclose(before)


def test_sync_examples():
    online = init_params(3, 2, hidden=(5,), seed=4)
    target, again = sync_target(online), sync_target(online)
    assert target.allclose(again)
    xs = np.random.default_rng(0).normal(size=(100, 3))
    assert np.array_equal(forward(target, xs), forward(online, xs))
    ref = forward(target, xs)
    online.weights[0] += 1.0
    assert np.array_equal(forward(target, xs), ref)


# deep agents


def test_ddr_fixed_point():
    online, target = zero_params(1, 1, hidden=(2,)), zero_params(1, 1, hidden=(2,))
    batch = Batch(np.ones((4, 1)), np.zeros(4, dtype=np.int64), np.ones(4), np.ones((4, 1)))
    _, u, loss = ddr_learn_batch(online, target, 1.0, batch, 0.1, Sgd(0.1))
    assert u == 1.0 and loss == 0.0
    rng = np.random.default_rng(0)
    noisy = Batch(rng.normal(size=(4, 1)), np.zeros(4, dtype=np.int64), rng.normal(size=4),
                  rng.normal(size=(4, 1)))
    _, u, _ = ddr_learn_batch(init_params(1, 1, hidden=(2,)), init_params(1, 1, hidden=(2,)),
                              0.7, noisy, 0.0, Sgd(0.1))
    assert u == 0.7


def test_ddrviq_zero_targets():
    net = zero_params(2, 3, hidden=(4,))
    batch = Batch(np.ones((3, 2)), np.array([0, 1, 2]), np.full(3, 2.5), np.ones((3, 2)))
    assert ddrviq_targets(net, np.zeros(2), batch).tolist() == [2.5] * 3


def test_dqn_examples():
    net = zero_params(2, 2, hidden=(3,))
    batch = Batch(np.ones((2, 2)), np.array([0, 1]), np.array([1.0, -2.0]), np.ones((2, 2)))
    assert dqn_targets(net, 0.0, batch).tolist() == [1.0, -2.0]
    fixed = zero_params(1, 1, hidden=(2,))
    fixed.biases[-2][:] = 2.0
    one = Batch(np.ones((4, 1)), np.zeros(4, dtype=np.int64), np.ones(4), np.ones((4, 1)))
    _, loss = dqn_learn_batch(fixed.copy(), fixed, 0.5, one, Sgd(0.1))
    assert loss == 0.0


def test_act_examples():
    params = zero_params(1, 3, hidden=(2,))
    rng = np.random.default_rng(0)
    assert act(params, np.ones(1), 0.0, rng) == 0
    params.biases[-1][:] = [0.0, 1.0, 0.5]
    assert act(params, np.ones(1), 0.0, rng) == 1
    counts = np.bincount([act(params, np.ones(1), 1.0, rng) for _ in range(6_000)], minlength=3)
    assert counts.min() > 1_800


def test_evaluate_policy_examples():
    one_env = TabularEnv(ONE)
    net = zero_params(1, 1, hidden=(2,))
    assert evaluate_policy(net, one_env, horizon=100, burn_in=10) == 1.0
    assert evaluate_policy(net, one_env, horizon=11, burn_in=10) == 1.0
    y_net = zero_params(3, 2, hidden=())
    y_net.weights[-1][0] = [0.0, 1.0]  # prefer action 1 in state 0 only
    score = evaluate_policy(y_net, TabularEnv(DELAYED), horizon=3_000, burn_in=0)
    assert score == pytest.approx(10 / 3, abs=10 / 3_000)


@pytest.mark.slow
def test_ddr_tail_is_stable(record_property):
    env = aoi_env(1, 1, 4, request_prob=1.0)
    mean, std = summarize_tail(train_deep("ddr", env, DeepAgentConfig(seed=0)), 10)
    record_property("ddr_tail", (mean, std))
    assert std <= 0.05 * abs(mean)


@pytest.mark.slow
def test_dqn_gamma_sweep_recorded(record_property):
    env = aoi_env(1, 1, 4, request_prob=1.0)
    finals = {g: train_deep("ddqn", env, DeepAgentConfig(gamma=g, seed=0)).eval_avg_reward[-1]
              for g in (0.5, 0.9, 0.99)}
    best = max(finals, key=finals.get)
    record_property("dqn_gamma_sweep", finals)
    record_property("dqn_best_gamma", best)
    assert all(np.isfinite(v) for v in finals.values())


# environments


def test_aoi_examples():
    env = aoi_env(1, 1, 3, request_prob=1.0)
    env.reset(0)
    for _ in range(10):
        u, s = env.step(0)
    assert s.user == ((3,),) and u == -3.0
    env = aoi_env(1, 1, 5, request_prob=1.0, energy_costs=[1.0])
    env.reset(0)
    for _ in range(10):
        u, _ = env.step(1)
    assert u == -2.0
    mdp, _ = aoi_env(1, 1, 4, request_prob=1.0).to_tabular()
    assert mdp.num_states <= 16
    best_cycle = max(average_reward(mdp, p) for p in enumerate_det_policies(mdp)
                     if is_unichain(mdp, p))
    assert relative_value_iteration(mdp).gain == pytest.approx(best_cycle, abs=1e-9)
    assert aoi_env(1, 1, 3, request_prob=1.0).to_tabular()[0].num_states <= 9


@pytest.mark.slow
def test_aoi_bounds_long_run():
    env = aoi_env(2, 2, 5, request_prob=0.5, seed=1)
    state = env.reset(1)
    actions = np.random.default_rng(1).integers(env.num_actions, size=1_000_000)
    lo, hi = 5, 1
    for a in actions.tolist():
        _, state = env.step(a)
        vals = state.ecn + state.user[0] + state.user[1]
        lo, hi = min(lo, *vals), max(hi, *vals)
    assert lo >= 1 and hi <= 5


def test_export_examples():
    mdp, _ = TabularEnv(ONE).to_tabular()
    assert mdp.num_states == 1


# harness


def test_harness_examples(tmp_path):
    recs = run_experiment(ExperimentConfig(env="delayed", agent="rlearn", seeds=[0]))
    assert len(recs) == 1 and recs[0].eval_avg_reward[-1] == pytest.approx(10 / 3, abs=1e-3)
    zero = run_experiment(ExperimentConfig(env="delayed", agent="rlearn", seeds=[0, 1],
                                           agent_config={"steps": 0}, out_dir=str(tmp_path)))
    assert [len(r) for r in zero] == [0, 0]
    cfg = ExperimentConfig(env="aoi:K=1,N=1,dmax=4,p=1", agent="ddrviq", seeds=list(range(6)),
                           refs=[1, 2, 3, 4, 5], ref_mode="subspace",
                           agent_config={"steps": 0})
    assert len(run_experiment(cfg)) == 30


def test_envelope_and_tail_examples():
    rec = RunRecord(agent="x", seed=0)
    for i, v in enumerate([1.0, 2.0, 3.0]):
        rec.append(i + 1, v)
    env = aggregate_envelope([rec])
    assert env.mean.tolist() == env.min.tolist() == env.max.tolist() == [1.0, 2.0, 3.0]
    const = []
    for seed, c in ((0, 1.0), (1, 3.0)):
        r = RunRecord(agent="x", seed=seed)
        r.append(1, c)
        const.append(r)
    env = aggregate_envelope(const)
    assert (env.mean[0], env.min[0], env.max[0]) == (2.0, 1.0, 3.0)
    assert summarize_tail(rec, 2) == (2.5, 0.5)
    assert summarize_tail([4.0] * 5, 3) == (4.0, 0.0)
