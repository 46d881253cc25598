"""Continuing environments: random unichain MDPs, the delayed-payoff witness,
and a reduced age-of-information (AoI) status-update model.

Every environment exposes ``reset(seed) -> state``, ``step(action) ->
(reward, next_state)``, ``encode(state) -> features`` and, when the reachable
state space is small enough, ``to_tabular() -> (TabularMdp, StateIndexer)``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import CapExceededError, ContractError, EnvSpecError
from .mdp import TabularMdp

EPS_MIX = 0.05
DEFAULT_STATE_CAP = 10**5
DEFAULT_ENERGY_COST = 1.5


class StateIndexer:
    """Bijection between environment states and tabular indices."""

    def __init__(self, states):
        self.states = list(states)
        self._index = {s: i for i, s in enumerate(self.states)}

    def index(self, state):
        return self._index[state]

    def state(self, i):
        return self.states[i]

    def __len__(self):
        return len(self.states)

    def __contains__(self, state):
        return state in self._index


def random_unichain(num_states, num_actions, seed=0, reward_range=(0.0, 1.0), eps_mix=EPS_MIX):
    """Random MDP that is unichain under every policy.

    Each ``(s, a)`` row is a Dirichlet(1) draw mixed with ``eps_mix`` uniform
    mass, so every transition probability is positive and every induced chain
    is irreducible. Rewards are drawn per outcome, uniform in ``reward_range``.
    """
    if num_states < 1 or num_actions < 1:
        raise ContractError("num_states and num_actions must be >= 1")
    lo, hi = reward_range
    rng = np.random.default_rng(seed)
    kernel = []
    for _ in range(num_states):
        row = []
        for _ in range(num_actions):
            probs = (1.0 - eps_mix) * rng.dirichlet(np.ones(num_states)) + eps_mix / num_states
            rewards = rng.uniform(lo, hi, size=num_states)
            row.append([(s2, float(rewards[s2]), float(probs[s2])) for s2 in range(num_states)])
        kernel.append(row)
    return TabularMdp.from_kernel(kernel)


def delayed_payoff_mdp():
    """Three states; at s0 action 0 collects 1 and stays, action 1 starts a
    0, 0, 10 cycle through s1 and s2 back to s0.

    Myopic discounting prefers the self-loop (average 1); the cycle averages
    10/3.
    """
    return TabularMdp.from_kernel([
        [[(0, 1.0, 1.0)], [(1, 0.0, 1.0)]],
        [[(2, 0.0, 1.0)], [(2, 0.0, 1.0)]],
        [[(0, 10.0, 1.0)], [(0, 10.0, 1.0)]],
    ])


class TabularEnv:
    """Sampling environment over a :class:`TabularMdp`; states are indices."""

    def __init__(self, mdp, start_state=0, seed=None):
        if not 0 <= start_state < mdp.num_states:
            raise ContractError(f"start_state {start_state} out of range")
        self.mdp = mdp
        self.start_state = start_state
        self.num_actions = mdp.num_actions
        self.feature_dim = mdp.num_states
        self._cum = mdp.cumulative_prob
        self._rng = np.random.default_rng(seed)
        self.state = start_state

    def reset(self, seed=None):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.state = self.start_state
        return self.state

    def step(self, action):
        i = self.state * self.mdp.num_actions + int(action)
        j, last = int(self.mdp.offsets[i]), int(self.mdp.offsets[i + 1]) - 1
        u = self._rng.random()
        while j < last and u >= self._cum[j]:
            j += 1
        self.state = int(self.mdp.next_state[j])
        return float(self.mdp.reward[j]), self.state

    def encode(self, state):
        x = np.zeros(self.mdp.num_states)
        x[state] = 1.0
        return x

    def to_tabular(self, cap=DEFAULT_STATE_CAP):
        if self.mdp.num_states > cap:
            raise CapExceededError("tabular states", self.mdp.num_states, cap)
        return self.mdp, StateIndexer(range(self.mdp.num_states))

    def reference_features(self, ref_state):
        return self.encode(ref_state)


@dataclass(frozen=True)
class AoiState:
    """Per-sensor AoI at the edge cache and per-(user, sensor) AoI at users."""

    ecn: tuple
    user: tuple


class AoiEnv:
    """Reduced caching-IoT status-update model.

    Each slot the agent activates a set of sensors (at most one when
    ``single_activation``). An activated sensor refreshes its cached copy,
    whose AoI drops to 1, and pays its energy cost; every other cached copy
    ages by one slot up to ``delta_max``. Each user independently requests
    each sensor's data with probability ``request_prob`` and then holds the
    cache's current AoI; otherwise its own copy ages. The reward is
    ``-(beta1 * mean user AoI + beta2 * energy spent)``.

    Actions: with ``single_activation`` action 0 idles and action ``k``
    activates sensor ``k - 1``; otherwise the action is a K-bit mask.
    """

    def __init__(self, K, N, delta_max, beta1=1.0, beta2=1.0, energy_costs=None,
                 request_prob=0.5, single_activation=True, seed=None):
        if K < 1 or N < 1:
            raise ContractError("K and N must be >= 1")
        if delta_max < 2:
            raise ContractError("delta_max must be >= 2")
        if beta1 < 0 or beta2 < 0:
            raise ContractError("reward weights must be non-negative")
        if not 0.0 <= request_prob <= 1.0:
            raise ContractError("request_prob must lie in [0, 1]")
        if energy_costs is None:
            energy = np.full(K, DEFAULT_ENERGY_COST)
        else:
            energy = np.asarray(energy_costs, dtype=float)
        if energy.shape != (K,) or np.any(energy < 0):
            raise ContractError("energy_costs must be K non-negative values")
        self.K, self.N, self.delta_max = K, N, delta_max
        self.beta1, self.beta2 = float(beta1), float(beta2)
        self.energy_costs = tuple(energy.tolist())
        self.request_prob = float(request_prob)
        self.single_activation = single_activation
        if single_activation:
            masks = [tuple(k == a - 1 for k in range(K)) for a in range(K + 1)]
        else:
            masks = [tuple(bool(a >> k & 1) for k in range(K)) for a in range(2**K)]
        self._masks = masks
        self._energy = [sum(c for c, on in zip(self.energy_costs, m) if on) for m in masks]
        self.num_actions = len(masks)
        self.feature_dim = K * (N + 1)
        self._rng = np.random.default_rng(seed)
        self.state = self.initial_state()

    def initial_state(self):
        return AoiState(ecn=(1,) * self.K, user=((1,) * self.K,) * self.N)

    def reset(self, seed=None):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.state = self.initial_state()
        return self.state

    def activation(self, action):
        return self._masks[action]

    def _next_ecn(self, ecn, action):
        cap = self.delta_max
        return tuple(1 if on else min(e + 1, cap) for e, on in zip(ecn, self._masks[action]))

    def reward(self, next_state, action):
        total = sum(sum(row) for row in next_state.user)
        return -(self.beta1 * total / (self.N * self.K) + self.beta2 * self._energy[action])

    def step(self, action):
        st = self.state
        ecn = self._next_ecn(st.ecn, action)
        draws = self._rng.random(self.N * self.K).tolist()
        p, cap, K = self.request_prob, self.delta_max, self.K
        user = tuple(
            tuple(ecn[k] if draws[n * K + k] < p else min(u + 1, cap) for k, u in enumerate(row))
            for n, row in enumerate(st.user))
        self.state = AoiState(ecn=ecn, user=user)
        return self.reward(self.state, action), self.state

    def encode(self, state):
        flat = list(state.ecn)
        for row in state.user:
            flat.extend(row)
        return np.asarray(flat, dtype=np.float64) / self.delta_max

    def outcomes(self, state, action):
        """Exact ``[(next_state, reward, prob)]`` for one ``(state, action)``."""
        ecn = self._next_ecn(state.ecn, action)
        p, cap, K = self.request_prob, self.delta_max, self.K
        dist = {(): 1.0}
        for n, row in enumerate(state.user):
            for k, u in enumerate(row):
                choices = {}
                if p > 0.0:
                    choices[ecn[k]] = choices.get(ecn[k], 0.0) + p
                if p < 1.0:
                    aged = min(u + 1, cap)
                    choices[aged] = choices.get(aged, 0.0) + (1.0 - p)
                nxt = {}
                for prefix, q in dist.items():
                    for v, pv in choices.items():
                        key = prefix + (v,)
                        nxt[key] = nxt.get(key, 0.0) + q * pv
                dist = nxt
        out = []
        for flat, prob in dist.items():
            user = tuple(flat[n * K:(n + 1) * K] for n in range(self.N))
            nxt_state = AoiState(ecn=ecn, user=user)
            out.append((nxt_state, self.reward(nxt_state, action), prob))
        return out

    def to_tabular(self, cap=DEFAULT_STATE_CAP):
        """Export the reachable part of the model, starting from the reset state."""
        cells = self.N * self.K
        patterns = 2**cells if 0.0 < self.request_prob < 1.0 else 1
        if patterns > cap:
            raise CapExceededError("request outcome patterns per (state, action)", patterns, cap)
        start = self.initial_state()
        states, index = [start], {start: 0}
        queue = deque([start])
        rows = []
        while queue:
            st = queue.popleft()
            row = []
            for a in range(self.num_actions):
                outs = []
                for nxt, u, prob in self.outcomes(st, a):
                    if nxt not in index:
                        if len(states) >= cap:
                            raise CapExceededError("reachable states", f">{cap}", cap)
                        index[nxt] = len(states)
                        states.append(nxt)
                        queue.append(nxt)
                    outs.append((index[nxt], u, prob))
                row.append(outs)
            rows.append(row)
        return TabularMdp.from_kernel(rows), StateIndexer(states)

    def subspace_state_features(self, i, n_subspaces, rng):
        """Encoded state with every AoI entry drawn from the ``i``-th of
        ``n_subspaces`` disjoint AoI ranges (``i`` counts from 1).

        When ``delta_max`` splits evenly the ranges are the integer blocks
        ``[(i-1)*d/n + 1, i*d/n]``; otherwise ``[1, delta_max]`` is cut into
        equal real intervals and values are drawn continuously.
        """
        if not 1 <= i <= n_subspaces:
            raise ContractError(f"subspace index {i} outside 1..{n_subspaces}")
        d = self.delta_max
        size = self.feature_dim
        if d % n_subspaces == 0:
            width = d // n_subspaces
            values = rng.integers((i - 1) * width + 1, i * width + 1, size=size)
        else:
            width = (d - 1) / n_subspaces
            values = rng.uniform(1 + (i - 1) * width, 1 + i * width, size=size)
        return np.asarray(values, dtype=np.float64) / d


def aoi_env(K, N, delta_max, beta1=1.0, beta2=1.0, energy_costs=None, request_prob=0.5,
            single_activation=True, seed=None):
    return AoiEnv(K, N, delta_max, beta1=beta1, beta2=beta2, energy_costs=energy_costs,
                  request_prob=request_prob, single_activation=single_activation, seed=seed)


def to_tabular(env, cap=DEFAULT_STATE_CAP):
    """``(TabularMdp, StateIndexer)`` for an environment or a bare MDP."""
    if isinstance(env, TabularMdp):
        return TabularEnv(env).to_tabular(cap)
    return env.to_tabular(cap)


_SPEC_FIELDS = {
    "random": {"S": int, "A": int, "seed": int, "rmin": float, "rmax": float},
    "delayed": {},
    "aoi": {"K": int, "N": int, "dmax": int, "b1": float, "b2": float, "p": float,
            "energy": float, "full": int, "seed": int},
}
_REQUIRED = {"random": ("S", "A"), "delayed": (), "aoi": ("K", "N", "dmax")}


def parse_env_spec(spec):
    """Parse ``kind[:key=value,...]`` into ``(kind, fields)``."""
    kind, _, rest = spec.strip().partition(":")
    if kind not in _SPEC_FIELDS:
        raise EnvSpecError(f"unknown environment kind {kind!r} (expected random, delayed or aoi)")
    fields = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, raw = item.partition("=")
        if not eq:
            raise EnvSpecError(f"field {item!r} in {kind} spec is not key=value")
        if key not in _SPEC_FIELDS[kind]:
            raise EnvSpecError(f"unknown field {key!r} in {kind} spec")
        try:
            fields[key] = _SPEC_FIELDS[kind][key](raw)
        except ValueError:
            raise EnvSpecError(
                f"field {key!r} in {kind} spec: cannot parse {raw!r} as "
                f"{_SPEC_FIELDS[kind][key].__name__}") from None
    missing = [k for k in _REQUIRED[kind] if k not in fields]
    if missing:
        raise EnvSpecError(f"{kind} spec is missing field(s) {', '.join(missing)}")
    return kind, fields


def make_env(spec):
    """Build an environment from a spec string such as ``'aoi:K=1,N=1,dmax=4,p=1'``."""
    kind, f = parse_env_spec(spec)
    try:
        if kind == "random":
            mdp = random_unichain(f["S"], f["A"], seed=f.get("seed", 0),
                                  reward_range=(f.get("rmin", 0.0), f.get("rmax", 1.0)))
            return TabularEnv(mdp)
        if kind == "delayed":
            return TabularEnv(delayed_payoff_mdp())
        energy = [f["energy"]] * f["K"] if "energy" in f else None
        return AoiEnv(f["K"], f["N"], f["dmax"], beta1=f.get("b1", 1.0), beta2=f.get("b2", 1.0),
                      energy_costs=energy, request_prob=f.get("p", 0.5),
                      single_activation=not f.get("full", 0), seed=f.get("seed"))
    except ContractError as exc:
        raise EnvSpecError(f"invalid {kind} spec {spec!r}: {exc}") from None
