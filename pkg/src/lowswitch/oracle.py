"""Exact planning: value iteration for Q*/V*, policy evaluation, and the
backward recursion for values of non-stationary policy sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mdp import TabularMdp

DIRECT_SOLVE_MAX_STATES = 512


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class StationaryPolicy:
    """Deterministic stationary policy: one action index per state."""

    actions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))

    @classmethod
    def greedy(cls, q: np.ndarray) -> "StationaryPolicy":
        # np.argmax returns the first maximizer, i.e. lowest index on ties.
        return cls(tuple(np.argmax(q, axis=1)))

    def check(self, mdp: TabularMdp) -> None:
        if len(self.actions) != mdp.n_states:
            raise ValueError("policy length does not match n_states")
        if any(not 0 <= a < mdp.n_actions for a in self.actions):
            raise ValueError("policy action out of range")

    def as_matrix(self, n_actions: int) -> np.ndarray:
        m = np.zeros((len(self.actions), n_actions))
        m[np.arange(len(self.actions)), self.actions] = 1.0
        return m


@dataclass(frozen=True)
class OracleSolution:
    q_star: np.ndarray
    v_star: np.ndarray
    pi_star: StationaryPolicy
    residual: float
    iterations: int

    def to_dict(self) -> dict:
        return {
            "v_star": self.v_star.tolist(),
            "q_star": self.q_star.tolist(),
            "pi_star": list(self.pi_star.actions),
            "residual": self.residual,
        }


def bellman_optimality_backup(mdp: TabularMdp, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One application of the optimality operator; returns ``(v_next, q_next)``."""
    q = mdp.rewards + mdp.gamma * (mdp.transitions @ np.asarray(v, dtype=np.float64))
    return q.max(axis=1), q


def value_iteration(mdp: TabularMdp, tol: float = 1e-10, max_iters: int = 1_000_000) -> OracleSolution:
    """Value iteration from zero until ``||v_star - V*||_inf <= tol`` is certified.

    The stop rule ``residual <= tol (1 - gamma) / (2 gamma)`` bounds the
    distance of the returned iterate to the fixed point by ``tol / 2``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    threshold = tol * (1.0 - mdp.gamma) / (2.0 * mdp.gamma)
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for it in range(1, max_iters + 1):
        v_next, q = bellman_optimality_backup(mdp, v)
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        if residual <= threshold:
            return OracleSolution(q, v, StationaryPolicy.greedy(q), residual, it)
    raise ConvergenceError(f"value iteration did not converge in {max_iters} iterations", residual)


def policy_matrices(mdp: TabularMdp, policy) -> tuple[np.ndarray, np.ndarray]:
    """``(P_pi, r_pi)`` for a deterministic policy or an ``(S, A)`` action-probability table."""
    if isinstance(policy, StationaryPolicy):
        policy.check(mdp)
        idx = np.arange(mdp.n_states)
        acts = np.asarray(policy.actions)
        return mdp.transitions[idx, acts], mdp.rewards[idx, acts]
    probs = np.asarray(policy, dtype=np.float64)
    p_pi = np.einsum("sa,sat->st", probs, mdp.transitions)
    r_pi = np.einsum("sa,sa->s", probs, mdp.rewards)
    return p_pi, r_pi


def policy_evaluation(mdp: TabularMdp, pi, tol: float = 1e-10) -> np.ndarray:
    """V^pi for a stationary policy.

    Direct linear solve for ``S <= 512``; fixed-point iteration otherwise.
    ``pi`` is a :class:`StationaryPolicy`; an ``(S, A)`` probability table is
    also accepted for the uniform-random baseline.
    """
    p_pi, r_pi = policy_matrices(mdp, pi)
    gamma = mdp.gamma
    if mdp.n_states <= DIRECT_SOLVE_MAX_STATES:
        v = np.linalg.solve(np.eye(mdp.n_states) - gamma * p_pi, r_pi)
        residual = float(np.max(np.abs(r_pi + gamma * p_pi @ v - v)))
        if residual > tol:
            raise ConvergenceError("direct policy evaluation exceeded residual tolerance", residual)
        return v
    v = np.zeros(mdp.n_states)
    threshold = tol * (1.0 - gamma) / (2.0 * gamma)
    for _ in range(10_000_000):
        v_next = r_pi + gamma * p_pi @ v
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        if residual <= threshold:
            return v
    raise ConvergenceError("iterative policy evaluation did not converge", residual)


def nonstationary_value(
    mdp: TabularMdp,
    policy_sequence: Sequence[tuple[object, int]],
    terminal_v: np.ndarray,
) -> np.ndarray:
    """Values of running the remaining policy sequence from each step.

    ``policy_sequence`` is a list of ``(policy, epoch_length)`` pairs covering
    steps ``1..T``. Returns a ``(T, S)`` array whose row ``t-1`` is
    ``W_t = r_{pi_t} + gamma P_{pi_t} W_{t+1}`` with ``W_{T+1} = terminal_v``.
    """
    from .agent import backend

    mats = [policy_matrices(mdp, pi) for pi, _ in policy_sequence]
    lengths = np.array([length for _, length in policy_sequence], dtype=np.int64)
    if np.any(lengths < 0):
        raise ValueError("epoch lengths must be nonnegative")
    p_stack = np.ascontiguousarray(np.stack([m[0] for m in mats])) if mats else np.zeros((0, mdp.n_states, mdp.n_states))
    r_stack = np.ascontiguousarray(np.stack([m[1] for m in mats])) if mats else np.zeros((0, mdp.n_states))
    epoch_of_step = np.repeat(np.arange(len(mats), dtype=np.int64), lengths)
    total = int(lengths.sum())
    out = np.empty((total + 1, mdp.n_states))
    out[total] = np.asarray(terminal_v, dtype=np.float64)
    backend.kernel.backward_values(p_stack, r_stack, epoch_of_step, mdp.gamma, out)
    return out[:total]
