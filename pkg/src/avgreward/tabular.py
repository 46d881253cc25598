"""Model-free tabular learners for continuing tasks.

Three update rules share one training loop:

* ``q``      discounted Q-learning (the baseline the average-reward rules are
  contrasted with),
* ``rviq``   RVI Q-learning, which subtracts ``max_a Q(s_ref, a)`` for a fixed
  reference state,
* ``rlearn`` R-learning, which tracks an explicit average-reward estimate
  ``u_tilde`` and only moves it on transitions whose action is greedy for the
  freshly updated table.

The per-transition functions below are the reference semantics; the training
loop runs the same arithmetic through :mod:`avgreward.kernels`.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .envs import TabularEnv
from .errors import ContractError
from .mdp import Policy, TabularMdp
from .records import RunRecord

AGENT_KINDS = {"q": kernels.KIND_Q, "rviq": kernels.KIND_RVIQ, "rlearn": kernels.KIND_RLEARN}


@dataclass
class ValueStore:
    table: np.ndarray
    u_tilde: float | None = None

    @classmethod
    def zeros(cls, num_states, num_actions, average=False):
        return cls(np.zeros((num_states, num_actions)), 0.0 if average else None)

    def copy(self):
        return ValueStore(self.table.copy(), self.u_tilde)


@dataclass
class LearningConfig:
    alpha: float = 0.1
    alpha_u: float = 0.01
    epsilon: float = 0.1
    gamma: float = 0.9
    ref_state: int = 0
    steps: int = 10_000
    eval_every: int = 1_000
    eval_horizon: int = 10_000
    eval_burn_in: int = 100
    seed: int = 0
    # optional linear schedules; 0 steps means constant
    alpha_final: float | None = None
    alpha_decay_steps: int = 0
    epsilon_final: float | None = None
    epsilon_anneal_steps: int = 0

    def check(self, num_states=None):
        for name in ("alpha", "alpha_u"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ContractError(f"{name} must lie in (0, 1]")
        if self.alpha_final is not None and not 0.0 < self.alpha_final <= 1.0:
            raise ContractError("alpha_final must lie in (0, 1]")
        for name in ("epsilon", "epsilon_final"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError("gamma must lie in [0, 1)")
        if self.steps < 0 or self.eval_every < 1:
            raise ContractError("steps must be >= 0 and eval_every >= 1")
        if self.eval_horizon <= self.eval_burn_in or self.eval_burn_in < 0:
            raise ContractError("eval_horizon must exceed eval_burn_in >= 0")
        if num_states is not None and not 0 <= self.ref_state < num_states:
            raise ContractError(f"ref_state {self.ref_state} out of range")

    def to_dict(self):
        return asdict(self)


def epsilon_greedy_from_uniforms(q_row, epsilon, u_explore, u_action):
    """Epsilon-greedy choice driven by two given uniforms in [0, 1)."""
    n = len(q_row)
    if n == 0:
        raise ContractError("q_row must be non-empty")
    if u_explore < epsilon:
        return min(int(u_action * n), n - 1)
    return int(np.argmax(q_row))


def epsilon_greedy(q_row, epsilon, rng):
    """Uniform action with probability ``epsilon``, else the first argmax."""
    u_explore, u_action = rng.random(2)
    return epsilon_greedy_from_uniforms(q_row, epsilon, u_explore, u_action)


def q_learning_update(store, s, a, u, s_next, gamma, alpha):
    q = store.table[s, a]
    td = u + gamma * store.table[s_next].max() - q
    store.table[s, a] = q + alpha * td
    return store


def rvi_q_update(store, s, a, u, s_next, ref_state, alpha):
    q = store.table[s, a]
    td = u + store.table[s_next].max() - store.table[ref_state].max() - q
    store.table[s, a] = q + alpha * td
    return store


def r_learning_update(store, s, a, u, s_next, alpha_r):
    q = store.table[s, a]
    td = u - store.u_tilde + store.table[s_next].max() - q
    store.table[s, a] = q + alpha_r * td
    return store


def r_learning_avg_update(store, s, a, u, s_next, alpha_u):
    """Move ``u_tilde`` only if ``(s, a)`` is greedy for the updated table.

    Call right after :func:`r_learning_update` on the same transition. Ties
    for the row maximum count as greedy.
    """
    q = store.table[s, a]
    if q == store.table[s].max():
        ut = store.u_tilde
        store.u_tilde = ut + alpha_u * (u + store.table[s_next].max() - q - ut)
    return store


def greedy_policy(table):
    """Deterministic policy taking the first maximising action in each row."""
    return Policy.deterministic(np.argmax(table, axis=1), table.shape[1])


def as_tabular(env):
    """Return ``(mdp, start_index)`` for an environment or a bare MDP."""
    if isinstance(env, TabularMdp):
        return env, 0
    if isinstance(env, TabularEnv):
        return env.mdp, env.start_state
    mdp, indexer = env.to_tabular()
    return mdp, indexer.index(env.reset())


def evaluate_actions(mdp, actions, start, horizon, burn_in, rng, backend=None):
    """Empirical average reward of a deterministic policy over one rollout."""
    kern = backend or kernels.backend
    noise = rng.random(horizon)
    mean, _ = kern.rollout(np.ascontiguousarray(actions, dtype=np.int64), int(start),
                           mdp.offsets, mdp.next_state, mdp.reward, mdp.cumulative_prob,
                           noise, int(burn_in))
    return float(mean)


def train_tabular(kind, env, config, backend=None, store=None):
    """Train one tabular agent and record greedy-policy evaluations.

    Every ``config.eval_every`` steps (and at the end) the greedy policy is
    frozen and scored by a rollout of ``config.eval_horizon`` steps from the
    start state, averaging the rewards after ``config.eval_burn_in``. Training
    and evaluation draw from independent streams spawned from ``config.seed``.
    """
    if kind not in AGENT_KINDS:
        raise ContractError(f"unknown tabular agent {kind!r}; expected one of {sorted(AGENT_KINDS)}")
    mdp, start = as_tabular(env)
    config.check(mdp.num_states)
    kern = backend or kernels.backend
    code = AGENT_KINDS[kind]
    if store is None:
        store = ValueStore.zeros(mdp.num_states, mdp.num_actions, average=(kind == "rlearn"))
    train_rng, eval_rng = (np.random.default_rng(s)
                           for s in np.random.SeedSequence(config.seed).spawn(2))
    alpha1 = config.alpha if config.alpha_final is None else config.alpha_final
    eps1 = config.epsilon if config.epsilon_final is None else config.epsilon_final
    record = RunRecord(agent=kind, seed=config.seed,
                       u_tilde=[] if kind == "rlearn" else None)
    state, t = start, 0
    u_tilde = 0.0 if store.u_tilde is None else store.u_tilde
    while t < config.steps:
        n = min(config.eval_every, config.steps - t)
        noise = train_rng.random((n, 3))
        state, u_tilde = kern.run_tabular(
            code, store.table, u_tilde, int(state),
            mdp.offsets, mdp.next_state, mdp.reward, mdp.cumulative_prob, noise,
            config.alpha, alpha1, config.alpha_decay_steps,
            config.epsilon, eps1, config.epsilon_anneal_steps,
            config.alpha_u, config.gamma, config.ref_state, t)
        t += n
        if kind == "rlearn":
            store.u_tilde = u_tilde
        score = evaluate_actions(mdp, np.argmax(store.table, axis=1), start,
                                 config.eval_horizon, config.eval_burn_in, eval_rng, kern)
        record.append(t, score, u_tilde=store.u_tilde)
    return record
