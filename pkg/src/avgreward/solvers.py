"""Exact dynamic programming for the discounted and average-reward criteria.

Policy evaluation goes through dense linear solves; the iterative schemes
(value iteration, relative value iteration) are used for optimisation. All of
this is meant for desk-scale MDPs that fit in memory as dense tensors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ConvergenceError, NotUnichainError
from .mdp import (
    DEFAULT_POLICY_CAP,
    Policy,
    enumerate_det_policies,
    induced_chain,
    is_unichain,
    stationary_distribution,
)

# Relative slack when comparing action values for greedy selection, so that
# mathematically tied actions resolve to the lowest index despite round-off.
TIE_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class GainBias:
    gain: float
    bias: np.ndarray
    policy: Policy
    ref_state: int
    iterations: int
    residual: float


@dataclass(frozen=True, eq=False)
class DiscountedSolution:
    values: np.ndarray
    policy: Policy
    gamma: float
    iterations: int
    residual: float


def greedy_actions(q):
    """Row-wise argmax of ``q`` with near-ties going to the lowest action index."""
    q = np.asarray(q, dtype=np.float64)
    best = q.max(axis=1, keepdims=True)
    slack = TIE_RTOL * np.maximum(1.0, np.abs(best))
    return np.argmax(q >= best - slack, axis=1)


def _check_gamma(gamma):
    if not 0.0 <= gamma < 1.0:
        raise ContractError(f"discount factor must lie in [0, 1), got {gamma}")


def average_reward(mdp, policy):
    """Long-run reward per step of ``policy``; independent of the start state."""
    P, r = induced_chain(mdp, policy)
    mu = stationary_distribution(P).mu
    return float(mu @ r)


def discounted_values(mdp, policy, gamma):
    """Discounted state values of ``policy`` from ``(I - gamma P) V = r``."""
    _check_gamma(gamma)
    P, r = induced_chain(mdp, policy)
    return np.linalg.solve(np.eye(mdp.num_states) - gamma * P, r)


def identity_residual(mdp, policy, gamma):
    """``|sum_s mu(s) V(s) - avg / (1 - gamma)|``; zero in exact arithmetic."""
    _check_gamma(gamma)
    P, r = induced_chain(mdp, policy)
    mu = stationary_distribution(P).mu
    gain = float(mu @ r)
    values = np.linalg.solve(np.eye(mdp.num_states) - gamma * P, r)
    return abs(float(mu @ values) - gain / (1.0 - gamma))


def abel_limit_profile(mdp, policy, gammas):
    """For each gamma, ``max_s |(1 - gamma) V(s) - avg|``."""
    gain = average_reward(mdp, policy)
    profile = []
    for gamma in gammas:
        values = discounted_values(mdp, policy, gamma)
        profile.append((float(gamma), float(np.max(np.abs((1.0 - gamma) * values - gain)))))
    return profile


def _q_values(mdp, values, gamma=1.0):
    return mdp.expected_reward + gamma * mdp.transition_tensor @ values


def discounted_value_iteration(mdp, gamma, tol=1e-10, max_iters=1_000_000):
    """Optimal discounted values and the greedy policy.

    Value iteration runs until successive iterates differ by at most ``tol``;
    the greedy policy is then polished by exact policy iteration, which makes
    the returned values exact up to linear-solve round-off even for gamma
    close to one.
    """
    _check_gamma(gamma)
    if tol <= 0:
        raise ContractError("tol must be positive")
    values = np.zeros(mdp.num_states)
    iterations = 0
    while True:
        new = _q_values(mdp, values, gamma).max(axis=1)
        iterations += 1
        delta = float(np.max(np.abs(new - values)))
        values = new
        if delta <= tol:
            break
        if iterations >= max_iters:
            raise ConvergenceError("discounted value iteration did not converge", delta)
    rows = np.arange(mdp.num_states)
    actions = greedy_actions(_q_values(mdp, values, gamma))
    for _ in range(10_000):
        exact = discounted_values(mdp, Policy.deterministic(actions, mdp.num_actions), gamma)
        q = _q_values(mdp, exact, gamma)
        incumbent = q[rows, actions]
        if np.all(q.max(axis=1) <= incumbent + TIE_RTOL * np.maximum(1.0, np.abs(incumbent))):
            values = exact
            break
        actions = greedy_actions(q)
    policy = Policy.deterministic(actions, mdp.num_actions)
    residual = float(np.max(np.abs(_q_values(mdp, values, gamma).max(axis=1) - values)))
    return DiscountedSolution(values=values, policy=policy, gamma=float(gamma),
                              iterations=iterations, residual=residual)


def relative_value_iteration(mdp, ref_state=0, tol=1e-10, max_iters=1_000_000, tau=0.5):
    """Optimal gain and bias by relative value iteration.

    Iterates on the aperiodic transform ``tau * T + (1 - tau) * I`` (same gain
    and bias, no oscillation on periodic chains) and stops once the span of
    ``T h - h`` is at most ``tol``; the gain is the midpoint of that span.
    """
    if not 0 <= ref_state < mdp.num_states:
        raise ContractError(f"ref_state {ref_state} out of range")
    if tol <= 0:
        raise ContractError("tol must be positive")
    if not 0.0 < tau <= 1.0:
        raise ContractError("tau must lie in (0, 1]")
    h = np.zeros(mdp.num_states)
    iterations = 0
    while True:
        diff = _q_values(mdp, h).max(axis=1) - h
        span = float(diff.max() - diff.min())
        if span <= tol:
            break
        if iterations >= max_iters:
            raise ConvergenceError("relative value iteration did not converge", span)
        h = h + tau * diff
        h = h - h[ref_state]
        iterations += 1
    gain = 0.5 * float(diff.max() + diff.min())
    policy = Policy.deterministic(greedy_actions(_q_values(mdp, h)), mdp.num_actions)
    if not is_unichain(mdp, policy):
        raise NotUnichainError("greedy policy from relative value iteration is not unichain")
    return GainBias(gain=gain, bias=h, policy=policy, ref_state=int(ref_state),
                    iterations=iterations, residual=span)


def brute_force_gain_optimal(mdp, cap=DEFAULT_POLICY_CAP):
    """Best deterministic unichain policy by exhaustive evaluation.

    Multichain policies have no single gain and are skipped. Earlier policies
    in lexicographic order win ties within 1e-12.
    """
    best_policy, best_gain = None, -np.inf
    for policy in enumerate_det_policies(mdp, cap=cap):
        if not is_unichain(mdp, policy):
            continue
        gain = average_reward(mdp, policy)
        if gain > best_gain + 1e-12:
            best_policy, best_gain = policy, gain
    if best_policy is None:
        raise NotUnichainError("no deterministic policy induces a unichain chain")
    return best_policy, float(best_gain)
