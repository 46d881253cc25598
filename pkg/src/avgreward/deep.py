"""Deep dueling agents for continuing tasks.

* ``ddr``    differential dueling R-learning. Regression targets are
  ``u - u_tilde + max_a' R_target(s', a')``. After each value step the
  average-reward estimate moves by the batch mean of the differential TD
  error, computed purely from target-network outputs and with no
  greedy-action gate.
* ``ddrviq`` deep RVI Q-learning: targets subtract ``max_a Q_target(ref, a)``
  for reference features fixed for the whole run.
* ``ddqn``   discounted dueling DQN baseline, targets
  ``u + gamma * max_a' Q_target(s', a')``.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError
from .neural import backward_batch, forward, init_params, make_optimizer, sync_target
from .records import RunRecord
from .tabular import epsilon_greedy

DEEP_KINDS = ("ddr", "ddrviq", "ddqn")


@dataclass
class Transition:
    features: np.ndarray
    action: int
    reward: float
    next_features: np.ndarray


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    @classmethod
    def from_transitions(cls, transitions):
        if not transitions:
            raise ContractError("batch must be non-empty")
        return cls(
            states=np.stack([t.features for t in transitions]).astype(np.float64),
            actions=np.asarray([t.action for t in transitions], dtype=np.int64),
            rewards=np.asarray([t.reward for t in transitions], dtype=np.float64),
            next_states=np.stack([t.next_features for t in transitions]).astype(np.float64),
        )

    def __len__(self):
        return len(self.actions)


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling.

    Items within one sampled batch are distinct.
    """

    def __init__(self, capacity, feature_dim, rng=None):
        if capacity < 1:
            raise ContractError("capacity must be >= 1")
        self.capacity = capacity
        self.rng = np.random.default_rng() if rng is None else rng
        self._states = np.zeros((capacity, feature_dim))
        self._next = np.zeros((capacity, feature_dim))
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity)
        self._pos = 0
        self._size = 0

    def __len__(self):
        return self._size

    def add(self, features, action, reward, next_features):
        i = self._pos
        self._states[i] = features
        self._actions[i] = action
        self._rewards[i] = reward
        self._next[i] = next_features
        self._pos = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, batch_size):
        if not 1 <= batch_size <= self._size:
            raise ContractError(f"cannot sample {batch_size} items from a buffer of {self._size}")
        return self.rng.choice(self._size, size=batch_size, replace=False)

    def sample(self, batch_size):
        idx = self.sample_indices(batch_size)
        return Batch(self._states[idx], self._actions[idx], self._rewards[idx], self._next[idx])


@dataclass
class DeepAgentConfig:
    gamma: float = 0.9
    alpha_u: float = 0.01
    batch_size: int = 32
    target_sync_every: int = 200
    buffer_capacity: int = 10_000
    lr: float = 1e-3
    optimizer: str = "adam"
    hidden: tuple = (64, 64)
    epsilon: float = 1.0
    epsilon_final: float = 0.05
    epsilon_anneal_steps: int = 2_000
    steps: int = 5_000
    learn_start: int = 0
    eval_every: int = 500
    eval_horizon: int = 2_000
    eval_burn_in: int = 100
    seed: int = 0
    ref_features: list | None = field(default=None)

    def check(self, kind):
        if kind not in DEEP_KINDS:
            raise ContractError(f"unknown deep agent {kind!r}; expected one of {DEEP_KINDS}")
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError("gamma must lie in [0, 1)")
        if not 0.0 <= self.alpha_u <= 1.0:
            raise ContractError("alpha_u must lie in [0, 1]")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            raise ContractError("batch_size must lie in [1, buffer_capacity]")
        if self.target_sync_every < 1 or self.eval_every < 1 or self.steps < 0:
            raise ContractError("target_sync_every and eval_every must be >= 1, steps >= 0")
        for name in ("epsilon", "epsilon_final"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")
        if self.eval_horizon <= self.eval_burn_in or self.eval_burn_in < 0:
            raise ContractError("eval_horizon must exceed eval_burn_in >= 0")
        if kind == "ddrviq" and self.ref_features is None:
            raise ContractError("ddrviq needs ref_features")

    def epsilon_at(self, t):
        n = self.epsilon_anneal_steps
        if n <= 0 or t >= n:
            return self.epsilon_final
        return self.epsilon + (self.epsilon_final - self.epsilon) * (t / n)

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        if self.ref_features is not None:
            d["ref_features"] = [float(x) for x in self.ref_features]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


def _check_batch(batch):
    if len(batch) == 0:
        raise ContractError("batch must be non-empty")


def ddr_targets(target, u_tilde, batch):
    """Regression targets ``u - u_tilde + max_a' R_target(s', a')``."""
    return batch.rewards - u_tilde + forward(target, batch.next_states).max(axis=1)


def ddr_value_step(online, target, u_tilde, batch, optimizer):
    """One gradient step of the online net toward the DDR targets; returns the loss."""
    _check_batch(batch)
    y = ddr_targets(target, u_tilde, batch)
    loss, grads = backward_batch(online, batch.states, batch.actions, y)
    optimizer.step(online, grads)
    return loss


def ddr_average_step(target, u_tilde, batch, alpha_u):
    """Batch-mean differential TD update of ``u_tilde`` from target outputs only."""
    _check_batch(batch)
    q_next = forward(target, batch.next_states).max(axis=1)
    q_taken = forward(target, batch.states)[np.arange(len(batch)), batch.actions]
    return u_tilde + alpha_u * float(np.mean(batch.rewards + q_next - q_taken - u_tilde))


def ddr_learn_batch(online, target, u_tilde, batch, alpha_u, optimizer):
    """Value step, then the average-reward step; returns ``(online, u_tilde, loss)``."""
    loss = ddr_value_step(online, target, u_tilde, batch, optimizer)
    u_tilde = ddr_average_step(target, u_tilde, batch, alpha_u)
    return online, u_tilde, loss


def ddrviq_targets(target, ref_features, batch):
    ref_max = float(forward(target, np.asarray(ref_features, dtype=np.float64)).max())
    return batch.rewards + forward(target, batch.next_states).max(axis=1) - ref_max


def ddrviq_learn_batch(online, target, ref_features, batch, optimizer):
    _check_batch(batch)
    y = ddrviq_targets(target, ref_features, batch)
    loss, grads = backward_batch(online, batch.states, batch.actions, y)
    optimizer.step(online, grads)
    return online, loss


def dqn_targets(target, gamma, batch):
    return batch.rewards + gamma * forward(target, batch.next_states).max(axis=1)


def dqn_learn_batch(online, target, gamma, batch, optimizer):
    if not 0.0 <= gamma < 1.0:
        raise ContractError("gamma must lie in [0, 1)")
    _check_batch(batch)
    y = dqn_targets(target, gamma, batch)
    loss, grads = backward_batch(online, batch.states, batch.actions, y)
    optimizer.step(online, grads)
    return online, loss


def act(params, features, epsilon, rng):
    return epsilon_greedy(forward(params, features), epsilon, rng)


def evaluate_policy(params, env, horizon=2_000, burn_in=100, seed=0):
    """Mean reward of the greedy policy over ``horizon`` steps, skipping the
    first ``burn_in``. The environment is reset with ``seed``.

    Greedy actions are memoised per visited state since ``params`` is fixed
    for the duration of the rollout.
    """
    if horizon <= burn_in or burn_in < 0:
        raise ContractError("horizon must exceed burn_in >= 0")
    state = env.reset(seed)
    chosen = {}
    total = 0.0
    for t in range(horizon):
        a = chosen.get(state)
        if a is None:
            a = chosen[state] = int(np.argmax(forward(params, env.encode(state))))
        u, state = env.step(a)
        if t >= burn_in:
            total += u
    return total / (horizon - burn_in)


class DeepAgent:
    """Online/target dueling networks plus the learning state of one run."""

    def __init__(self, kind, input_dim, num_actions, config):
        config.check(kind)
        self.kind = kind
        self.config = config
        init_seq, act_seq, replay_seq, env_seq, eval_seq = np.random.SeedSequence(config.seed).spawn(5)
        self.online = init_params(input_dim, num_actions, hidden=config.hidden,
                                  rng=np.random.default_rng(init_seq))
        self.target = sync_target(self.online)
        self.optimizer = make_optimizer(config.optimizer, config.lr)
        self.buffer = ReplayBuffer(config.buffer_capacity, input_dim, np.random.default_rng(replay_seq))
        self.act_rng = np.random.default_rng(act_seq)
        self.env_seed = int(env_seq.generate_state(1)[0])
        self.eval_seed = int(eval_seq.generate_state(1)[0])
        self.u_tilde = 0.0
        self.target_syncs = 0
        self.ref_features = (None if config.ref_features is None
                             else np.asarray(config.ref_features, dtype=np.float64))

    def learn(self, batch):
        cfg = self.config
        if self.kind == "ddr":
            _, self.u_tilde, loss = ddr_learn_batch(self.online, self.target, self.u_tilde, batch,
                                                    cfg.alpha_u, self.optimizer)
        elif self.kind == "ddrviq":
            _, loss = ddrviq_learn_batch(self.online, self.target, self.ref_features, batch,
                                         self.optimizer)
        else:
            _, loss = dqn_learn_batch(self.online, self.target, cfg.gamma, batch, self.optimizer)
        return loss

    def sync(self):
        self.target = sync_target(self.online)
        self.target_syncs += 1

    def run(self, env):
        """Train on ``env`` for ``config.steps`` interactions; returns the RunRecord."""
        cfg = self.config
        record = RunRecord(agent=self.kind, seed=cfg.seed,
                           u_tilde=[] if self.kind == "ddr" else None,
                           loss=[], target_syncs=[])
        eval_env = copy.deepcopy(env)
        state = env.reset(self.env_seed)
        x = env.encode(state)
        losses = []
        warm = max(cfg.batch_size, cfg.learn_start)
        for t in range(1, cfg.steps + 1):
            a = act(self.online, x, cfg.epsilon_at(t - 1), self.act_rng)
            u, state = env.step(a)
            x_next = env.encode(state)
            self.buffer.add(x, a, u, x_next)
            if len(self.buffer) >= warm:
                losses.append(self.learn(self.buffer.sample(cfg.batch_size)))
            if t % cfg.target_sync_every == 0:
                self.sync()
            if t % cfg.eval_every == 0 or t == cfg.steps:
                score = evaluate_policy(self.online, eval_env, cfg.eval_horizon,
                                        cfg.eval_burn_in, self.eval_seed)
                loss = float(np.mean(losses)) if losses else float("nan")
                record.append(t, score, u_tilde=self.u_tilde, loss=loss,
                              target_syncs=self.target_syncs)
                losses = []
            x = x_next
        return record


def train_deep(kind, env, config):
    """Train a fresh :class:`DeepAgent` on ``env``; use the class directly to keep the nets."""
    return DeepAgent(kind, env.feature_dim, env.num_actions, config).run(env)
