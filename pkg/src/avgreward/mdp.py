"""Finite continuing MDPs, policies and the Markov chains they induce.

Transition kernels are stored per outcome: each ``(s, a)`` pair owns a list
of ``(next_state, reward, prob)`` triples, so rewards may depend on the
sampled successor. Internally the outcomes are flattened into CSR-style
arrays (``offsets`` indexes into ``next_state``/``reward``/``prob``) which is
also the layout the compiled kernels consume.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import CapExceededError, ContractError, InvalidMdpError, NotUnichainError

PROB_TOL = 1e-12
DEFAULT_POLICY_CAP = 10**6


@dataclass(frozen=True, eq=False)
class TabularMdp:
    num_states: int
    num_actions: int
    offsets: np.ndarray
    next_state: np.ndarray
    reward: np.ndarray
    prob: np.ndarray

    @classmethod
    def from_kernel(cls, kernel, *, check=True):
        """Build from nested ``kernel[s][a] = [(next_state, reward, prob), ...]``.

        With ``check=True`` (the default) an invalid kernel raises
        :class:`InvalidMdpError`; pass ``check=False`` to build first and
        inspect with :func:`validate`.
        """
        num_states = len(kernel)
        if num_states == 0:
            raise ContractError("kernel must contain at least one state")
        num_actions = len(kernel[0])
        if num_actions == 0:
            raise ContractError("kernel must contain at least one action")
        offsets = [0]
        nxt, rew, prob = [], [], []
        for s, row in enumerate(kernel):
            if len(row) != num_actions:
                raise ContractError(
                    f"state {s} has {len(row)} actions, expected {num_actions}")
            for outcomes in row:
                for outcome in outcomes:
                    s_next, u, p = outcome
                    nxt.append(int(s_next))
                    rew.append(float(u))
                    prob.append(float(p))
                offsets.append(len(nxt))
        mdp = cls(
            num_states=num_states,
            num_actions=num_actions,
            offsets=_frozen(np.asarray(offsets, dtype=np.int64)),
            next_state=_frozen(np.asarray(nxt, dtype=np.int64)),
            reward=_frozen(np.asarray(rew, dtype=np.float64)),
            prob=_frozen(np.asarray(prob, dtype=np.float64)),
        )
        if check:
            report = validate(mdp)
            if report:
                raise InvalidMdpError(report)
        return mdp

    def outcomes(self, s, a):
        """Return the ``(next_state, reward, prob)`` triples of ``(s, a)``."""
        lo, hi = self.offsets[s * self.num_actions + a], self.offsets[s * self.num_actions + a + 1]
        return [
            (int(self.next_state[j]), float(self.reward[j]), float(self.prob[j]))
            for j in range(lo, hi)
        ]

    def to_kernel(self):
        return [[self.outcomes(s, a) for a in range(self.num_actions)]
                for s in range(self.num_states)]

    @cached_property
    def reward_set(self):
        return tuple(sorted(set(self.reward.tolist())))

    @cached_property
    def transition_tensor(self):
        """Dense ``P[s, a, s']``, summing probability over rewards."""
        P = np.zeros((self.num_states, self.num_actions, self.num_states))
        sa = np.repeat(np.arange(self.num_states * self.num_actions), np.diff(self.offsets))
        np.add.at(P.reshape(-1, self.num_states), (sa, self.next_state), self.prob)
        return _frozen(P)

    @cached_property
    def expected_reward(self):
        """``r[s, a] = sum over (s', u) of p(s', u | s, a) * u``."""
        sa = np.repeat(np.arange(self.num_states * self.num_actions), np.diff(self.offsets))
        r = np.zeros(self.num_states * self.num_actions)
        np.add.at(r, sa, self.prob * self.reward)
        return _frozen(r.reshape(self.num_states, self.num_actions))

    @cached_property
    def cumulative_prob(self):
        """Per-(s, a) running sums of outcome probabilities, used for sampling."""
        cum = np.empty_like(self.prob)
        for i in range(self.num_states * self.num_actions):
            lo, hi = self.offsets[i], self.offsets[i + 1]
            cum[lo:hi] = np.cumsum(self.prob[lo:hi])
        return _frozen(cum)

    def to_json(self):
        return {"num_states": self.num_states, "num_actions": self.num_actions,
                "kernel": [[[list(o) for o in outs] for outs in row] for row in self.to_kernel()]}


@dataclass(frozen=True, eq=False)
class Policy:
    """Row-stochastic ``probs[s, a]``; deterministic policies are one-hot rows."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise ContractError(f"policy must be a 2-d matrix, got shape {probs.shape}")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > PROB_TOL):
            raise ContractError("policy rows must be non-negative and sum to 1")
        object.__setattr__(self, "probs", _frozen(probs))

    @classmethod
    def deterministic(cls, actions, num_actions):
        actions = np.asarray(actions, dtype=np.int64)
        if np.any(actions < 0) or np.any(actions >= num_actions):
            raise ContractError("action index out of range")
        probs = np.zeros((len(actions), num_actions))
        probs[np.arange(len(actions)), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, num_states, num_actions):
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @property
    def num_states(self):
        return self.probs.shape[0]

    @property
    def num_actions(self):
        return self.probs.shape[1]

    @property
    def is_deterministic(self):
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    @property
    def actions(self):
        """Action per state; only meaningful for deterministic policies."""
        if not self.is_deterministic:
            raise ContractError("policy is not deterministic")
        return self.probs.argmax(axis=1)

    @property
    def key(self):
        """Compact id for deterministic policies, e.g. ``'1-0-0'``."""
        return "-".join(str(a) for a in self.actions.tolist())

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        if self.is_deterministic:
            return f"Policy(actions=[{self.key}])"
        return f"Policy(probs={self.probs.tolist()})"


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    mu: np.ndarray


def validate(mdp):
    """Return a list of human-readable invariant violations (empty if valid)."""
    report = []
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            i = s * mdp.num_actions + a
            lo, hi = int(mdp.offsets[i]), int(mdp.offsets[i + 1])
            if hi == lo:
                report.append(f"(s={s}, a={a}): no outcomes")
                continue
            for j in range(lo, hi):
                ns = int(mdp.next_state[j])
                if not 0 <= ns < mdp.num_states:
                    report.append(f"(s={s}, a={a}): state index out of range ({ns})")
                p = float(mdp.prob[j])
                if not 0.0 < p <= 1.0:
                    report.append(f"(s={s}, a={a}): probability {p!r} not in (0, 1]")
                if not np.isfinite(mdp.reward[j]):
                    report.append(f"(s={s}, a={a}): reward is not finite")
            total = float(np.sum(mdp.prob[lo:hi]))
            if abs(total - 1.0) > PROB_TOL:
                report.append(f"(s={s}, a={a}): probabilities sum to {total:.12g}")
    return report


def _check_policy(mdp, policy):
    if policy.probs.shape != (mdp.num_states, mdp.num_actions):
        raise ContractError(
            f"policy shape {policy.probs.shape} does not match MDP "
            f"({mdp.num_states}, {mdp.num_actions})")


def induced_chain(mdp, policy):
    """State-transition matrix and expected one-step reward under ``policy``."""
    _check_policy(mdp, policy)
    P = np.einsum("sa,sat->st", policy.probs, mdp.transition_tensor)
    r = np.einsum("sa,sa->s", policy.probs, mdp.expected_reward)
    return P, r


def _recurrent_classes(P):
    support = csr_matrix(P > 0.0)
    n_comp, labels = connected_components(support, directed=True, connection="strong")
    rows, cols = support.nonzero()
    leaks = labels[rows] != labels[cols]
    open_classes = set(labels[rows[leaks]].tolist())
    return [c for c in range(n_comp) if c not in open_classes], labels


def chain_is_unichain(P):
    closed, _ = _recurrent_classes(np.asarray(P))
    return len(closed) == 1


def is_unichain(mdp, policy):
    P, _ = induced_chain(mdp, policy)
    return chain_is_unichain(P)


def stationary_distribution(P):
    """Solve ``mu = mu P`` with ``sum(mu) = 1`` for a unichain chain.

    One balance equation is replaced by the normalisation row; the system is
    non-singular exactly when the chain has a single recurrent class.
    """
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    if P.ndim != 2 or P.shape[1] != n:
        raise ContractError(f"transition matrix must be square, got {P.shape}")
    if not chain_is_unichain(P):
        raise NotUnichainError("chain has more than one recurrent class")
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    mu = np.linalg.solve(A, b)
    mu = np.where(np.abs(mu) < 1e-15, 0.0, mu)
    return StationaryDistribution(mu=_frozen(mu))


def enumerate_det_policies(mdp, cap=DEFAULT_POLICY_CAP):
    """Yield every deterministic policy, in lexicographic order of actions."""
    count = mdp.num_actions ** mdp.num_states
    if count > cap:
        raise CapExceededError("deterministic policy count", count, cap)
    for actions in itertools.product(range(mdp.num_actions), repeat=mdp.num_states):
        yield Policy.deterministic(actions, mdp.num_actions)


def load_mdp(path):
    """Read the JSON MDP format; invalid kernels raise :class:`InvalidMdpError`."""
    doc = json.loads(Path(path).read_text())
    mdp = TabularMdp.from_kernel(doc["kernel"], check=False)
    if mdp.num_states != doc["num_states"] or mdp.num_actions != doc["num_actions"]:
        raise InvalidMdpError([
            f"header declares {doc['num_states']}x{doc['num_actions']}, "
            f"kernel has {mdp.num_states}x{mdp.num_actions}"])
    report = validate(mdp)
    if report:
        raise InvalidMdpError(report)
    return mdp


def save_mdp(mdp, path):
    Path(path).write_text(json.dumps(mdp.to_json()))


def _frozen(arr):
    arr.setflags(write=False)
    return arr
