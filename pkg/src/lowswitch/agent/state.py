from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields

import numpy as np

# Learner identifiers shared by the Python path and both kernels.
MAIN = 0
UCB_Q = 1
UCB_Q_ADV_EAGER = 2
GREEDY_Q = 3
RANDOM = 4

ALGORITHMS = {
    "main": MAIN,
    "ucb_q": UCB_Q,
    "ucb_q_adv_eager": UCB_Q_ADV_EAGER,
    "greedy_q": GREEDY_Q,
    "random": RANDOM,
}

REFERENCE_GAP = 3.0


@dataclass
class AgentOptions:
    """Execution knobs that are not part of the learning-rate/bonus schedule.

    ``switch_threshold`` defaults to ``1 / (1 - gamma)``; ``float('inf')``
    disables policy switching. ``reference_update_next_state`` additionally
    runs the reference-settlement block at ``s_{t+1}``.
    """

    switch_threshold: float | None = None
    reference_update_next_state: bool = False

    def threshold(self, gamma: float) -> float:
        if self.switch_threshold is None:
            return 1.0 / (1.0 - gamma)
        return float(self.switch_threshold)


@dataclass
class LearnerState:
    n_states: int
    n_actions: int
    gamma: float
    q: np.ndarray
    q_ucb: np.ndarray
    q_lcb: np.ndarray
    q_ref: np.ndarray
    q_lazy: np.ndarray
    q_snapshot: np.ndarray
    visit_count: np.ndarray
    mu_ref: np.ndarray
    sigma_ref: np.ndarray
    mu_adv: np.ndarray
    sigma_adv: np.ndarray
    b_big_ref: np.ndarray
    delta_ref: np.ndarray
    staleness: np.ndarray
    v: np.ndarray
    v_lcb: np.ndarray
    v_ref: np.ndarray
    u_ref: np.ndarray
    u_switch: bool = False
    buffer: dict = field(default_factory=dict)
    switch_count: int = 0
    t: int = 0
    current_state: int = 0

    TABLES = (
        "q", "q_ucb", "q_lcb", "q_ref", "q_lazy", "q_snapshot", "visit_count",
        "mu_ref", "sigma_ref", "mu_adv", "sigma_adv", "b_big_ref", "delta_ref",
        "staleness", "v", "v_lcb", "v_ref", "u_ref",
    )

    def copy(self) -> "LearnerState":
        return copy.deepcopy(self)

    def equals(self, other: "LearnerState") -> bool:
        """Bit-exact comparison of every table and scalar."""
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray):
                if a.dtype != b.dtype or a.shape != b.shape:
                    return False
                if a.dtype.kind == "f":
                    if not np.array_equal(a.view(np.int64), b.view(np.int64)):
                        return False
                elif not np.array_equal(a, b):
                    return False
            elif f.name == "buffer":
                if a.keys() != b.keys() or any(
                    np.float64(a[k]).tobytes() != np.float64(b[k]).tobytes() for k in a
                ):
                    return False
            elif a != b:
                return False
        return True

    def diff(self, other: "LearnerState") -> list[str]:
        out = []
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray):
                if not np.array_equal(a, b):
                    out.append(f.name)
            elif a != b:
                out.append(f.name)
        return out


def init_state(n_states: int, n_actions: int, gamma: float, initial_state: int = 0) -> LearnerState:
    """Fresh learner: optimistic tables at ``1/(1-gamma)``, pessimistic ones at 0."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be >= 1")
    if not 0 <= initial_state < n_states:
        raise ValueError("initial_state out of range")
    hi = 1.0 / (1.0 - gamma)
    shape = (n_states, n_actions)

    def full(x):
        return np.full(shape, x, dtype=np.float64)

    return LearnerState(
        n_states=n_states,
        n_actions=n_actions,
        gamma=float(gamma),
        q=full(hi),
        q_ucb=full(hi),
        q_lcb=full(0.0),
        q_ref=full(hi),
        q_lazy=full(hi),
        q_snapshot=full(hi),
        visit_count=np.zeros(shape, dtype=np.int64),
        mu_ref=full(0.0),
        sigma_ref=full(0.0),
        mu_adv=full(0.0),
        sigma_adv=full(0.0),
        b_big_ref=full(0.0),
        delta_ref=full(0.0),
        staleness=full(0.0),
        v=np.full(n_states, hi),
        v_lcb=np.zeros(n_states),
        v_ref=np.full(n_states, hi),
        u_ref=np.ones(n_states, dtype=bool),
        current_state=initial_state,
    )
