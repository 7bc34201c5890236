"""Regret, switching cost, invariant statistics and reference bound curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mdp import TabularMdp
from .oracle import OracleSolution, StationaryPolicy, nonstationary_value, policy_evaluation

HARD_INVARIANTS = ("monotonicity", "v_lcb_monotonicity", "buffer_equivalence", "visit_sum")


@dataclass
class PolicyEpoch:
    """Steps ``start..end`` (inclusive, 1-based) executed under one policy.

    ``policy`` is a :class:`StationaryPolicy`, or an ``(S, A)`` probability
    table for the uniform-random learner.
    """

    start: int
    end: int
    policy: object
    value: np.ndarray

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class MetricsSeries:
    """Cumulative per-step series of one run; entry ``k`` covers steps up to ``t0 + k + 1``."""

    regret_stat: np.ndarray
    switches: np.ndarray
    optimism_viol: np.ndarray | None = None
    pessimism_viol: np.ndarray | None = None
    proximity_viol: np.ndarray | None = None
    regret_ns: np.ndarray | None = None
    theoretical: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.regret_stat)


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def build_epochs(
    trace,
    mdp: TabularMdp,
    evaluate: Callable[[TabularMdp, object], np.ndarray] = policy_evaluation,
) -> list[PolicyEpoch]:
    """Split the run at its switch steps and evaluate each epoch's policy once.

    A switch flagged at step ``t`` takes effect from step ``t + 1``. The
    policy of every epoch is rebuilt from ``trace.initial_policy`` and the
    ``(t, state, action)`` change events.
    """
    n = len(trace)
    if n == 0:
        return []
    first, last = trace.t0 + 1, trace.t0 + n
    if trace.initial_policy is None:
        policy = uniform_policy(trace.n_states, trace.n_actions)
        return [PolicyEpoch(first, last, policy, evaluate(mdp, policy))]

    changes: dict[int, list[tuple[int, int]]] = {}
    for t, s, a in trace.events:
        changes.setdefault(int(t), []).append((int(s), int(a)))

    actions = [int(x) for x in trace.initial_policy]
    starts = [first] + [int(t) + 1 for t in trace.steps[trace.switched] if t < last]
    epochs = []
    for i, start in enumerate(starts):
        for s, a in changes.get(start - 1, ()):
            actions[s] = a
        end = starts[i + 1] - 1 if i + 1 < len(starts) else last
        policy = StationaryPolicy(tuple(actions))
        epochs.append(PolicyEpoch(start, end, policy, evaluate(mdp, policy)))
    return epochs


def epoch_index(epochs: list[PolicyEpoch]) -> np.ndarray:
    return np.repeat(np.arange(len(epochs)), [e.length for e in epochs])


def stationary_regret(trace, mdp: TabularMdp, solution: OracleSolution, epochs: list[PolicyEpoch]) -> np.ndarray:
    """Cumulative ``sum (V*(s_t) - V^{pi_t}(s_t))``."""
    if len(trace) == 0:
        return np.zeros(0)
    values = np.stack([e.value for e in epochs])
    gaps = solution.v_star[trace.states] - values[epoch_index(epochs), trace.states]
    return np.cumsum(gaps)


def terminal_value(epochs: list[PolicyEpoch], choice="last", n_states: int | None = None) -> np.ndarray:
    """Continuation value after the final step.

    ``"last"`` keeps running the final policy forever, ``"zero"`` stops.
    An explicit array is passed through.
    """
    if isinstance(choice, str):
        if choice == "last":
            return epochs[-1].value
        if choice == "zero":
            return np.zeros(n_states if n_states is not None else len(epochs[-1].value))
        raise ValueError(f"unknown terminal choice {choice!r}")
    return np.asarray(choice, dtype=np.float64)


def nonstationary_regret(
    trace, mdp: TabularMdp, solution: OracleSolution, epochs: list[PolicyEpoch], terminal_choice="last"
) -> np.ndarray:
    """Cumulative ``sum (V*(s_t) - W_t(s_t))`` with ``W_t`` the value of the remaining policy sequence."""
    if len(trace) == 0:
        return np.zeros(0)
    w = nonstationary_value(
        mdp, [(e.policy, e.length) for e in epochs], terminal_value(epochs, terminal_choice, mdp.n_states)
    )
    gaps = solution.v_star[trace.states] - w[np.arange(len(trace)), trace.states]
    return np.cumsum(gaps)


def switching_cost(trace) -> np.ndarray:
    return np.cumsum(np.asarray(trace.switched, dtype=np.int64))


def theoretical_bound(S, A, gamma, T, iota, constant=1.0) -> float:
    """Reference curve ``C (sqrt(S A T iota^3 / (1-g)^3) + S A iota^3.5 / (1-g)^8)``."""
    g = 1.0 - gamma
    return constant * (math.sqrt(S * A * T * iota**3 / g**3) + S * A * iota**3.5 / g**8)


def crude_bound(S, A, gamma, T, iota, constant=1.0) -> float:
    """Reference curve ``C (sqrt(S A T iota / (1-g)^5) + S A iota^2 / (1-g)^3.5)``."""
    g = 1.0 - gamma
    return constant * (math.sqrt(S * A * T * iota / g**5) + S * A * iota**2 / g**3.5)


def invariant_report(trace) -> dict:
    """Totals of monitored violations for one run.

    Probabilistic monitors count steps at which at least one entry was in
    violation; the hard invariants must always be zero.
    """
    if not trace.monitored:
        raise ValueError("run was executed without monitors")
    report = {
        "optimism": int(np.count_nonzero(trace.optimism_viol)),
        "pessimism": int(np.count_nonzero(trace.pessimism_viol)),
        "proximity": int(np.count_nonzero(trace.proximity_viol)),
    }
    report.update({k: int(trace.hard_violations.get(k, 0)) for k in HARD_INVARIANTS})
    return report


def hard_failure(report: dict) -> bool:
    return any(report.get(k, 0) for k in HARD_INVARIANTS)


def compute_metrics(
    trace,
    mdp: TabularMdp,
    solution: OracleSolution,
    nonstationary: bool = True,
    terminal_choice="last",
    bound_iota: float | None = None,
    evaluate=policy_evaluation,
) -> tuple[MetricsSeries, list[PolicyEpoch]]:
    epochs = build_epochs(trace, mdp, evaluate)
    series = MetricsSeries(
        regret_stat=stationary_regret(trace, mdp, solution, epochs),
        switches=switching_cost(trace),
    )
    if trace.monitored:
        series.optimism_viol = np.cumsum(trace.optimism_viol, dtype=np.int64)
        series.pessimism_viol = np.cumsum(trace.pessimism_viol, dtype=np.int64)
        series.proximity_viol = np.cumsum(trace.proximity_viol, dtype=np.int64)
    if nonstationary:
        series.regret_ns = nonstationary_regret(trace, mdp, solution, epochs, terminal_choice)
    if bound_iota is not None:
        steps = trace.steps
        series.theoretical = np.array(
            [theoretical_bound(mdp.n_states, mdp.n_actions, mdp.gamma, t, bound_iota) for t in steps]
        )
    return series, epochs
