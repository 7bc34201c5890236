"""Multi-step execution of a learner through the selected kernel."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..mdp import RngStream, TabularMdp
from ..schedule import HyperParams
from . import backend as _backend
from .state import ALGORITHMS, MAIN, RANDOM, AgentOptions, LearnerState
from .updates import HorizonExceeded, StepRecord

CHUNK_STEPS = 1 << 20


@dataclass
class RunTrace:
    """Per-step log of one online run plus the policy-change events.

    ``events`` holds ``(t, state, action)`` triples: after step ``t`` the
    execution policy takes ``action`` in ``state``. ``initial_policy`` is
    ``None`` for the uniform-random learner.
    """

    algorithm: str
    n_states: int
    n_actions: int
    t0: int
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    switched: np.ndarray
    n_after: np.ndarray
    initial_policy: np.ndarray | None
    events: list = field(default_factory=list)
    monitored: bool = False
    optimism_viol: np.ndarray | None = None
    pessimism_viol: np.ndarray | None = None
    proximity_viol: np.ndarray | None = None
    hard_violations: dict = field(default_factory=dict)
    switch_count: int = 0

    def __len__(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(self.t0 + 1, self.t0 + len(self) + 1)

    def records(self) -> Iterator[StepRecord]:
        for k in range(len(self)):
            yield StepRecord(
                int(self.t0 + k + 1), int(self.states[k]), int(self.actions[k]),
                float(self.rewards[k]), int(self.next_states[k]), bool(self.switched[k]),
                int(self.n_after[k]),
            )


def _buffer_arrays(state: LearnerState):
    mask = np.zeros((state.n_states, state.n_actions), dtype=np.uint8)
    vals = np.zeros((state.n_states, state.n_actions))
    for (i, j), value in state.buffer.items():
        mask[i, j] = 1
        vals[i, j] = value
    return mask, vals


def run(
    state: LearnerState,
    mdp: TabularMdp,
    hp: HyperParams,
    rng: RngStream,
    n_steps: int,
    algorithm: str = "main",
    options: AgentOptions | None = None,
    q_star: np.ndarray | None = None,
    backend: str | None = None,
) -> RunTrace:
    """Advance ``state`` by ``n_steps`` steps of ``algorithm``.

    When ``q_star`` is given, the optimism / pessimism / proximity monitors
    and the hard-invariant checks run on every step.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if state.t + n_steps > hp.horizon_T:
        raise HorizonExceeded(f"{state.t} + {n_steps} steps exceeds horizon_T={hp.horizon_T}")
    options = options or AgentOptions()
    algo = ALGORITHMS[algorithm]
    kern = _backend.get(backend)
    monitor = q_star is not None
    S, A = state.n_states, state.n_actions
    per_step = 2 if algo == RANDOM else 1

    if algo == RANDOM:
        initial_policy = None
    elif algo == MAIN:
        initial_policy = np.argmax(state.q_lazy, axis=1)
    else:
        initial_policy = np.argmax(state.q, axis=1)

    out = {
        "states": np.empty(n_steps, dtype=np.int64),
        "actions": np.empty(n_steps, dtype=np.int64),
        "rewards": np.empty(n_steps),
        "next_states": np.empty(n_steps, dtype=np.int64),
        "switched": np.zeros(n_steps, dtype=np.uint8),
        "n_after": np.empty(n_steps, dtype=np.int64),
    }
    flags = [np.zeros(n_steps if monitor else 0, dtype=np.uint8) for _ in range(3)]
    qs = np.ascontiguousarray(q_star, dtype=np.float64) if monitor else np.zeros((S, A))
    mask, vals = _buffer_arrays(state)
    scalars = np.array([state.t, state.current_state, int(state.u_switch), state.switch_count], dtype=np.int64)
    hard = np.zeros(3, dtype=np.int64)
    events: list = []
    t0 = state.t
    u_ref = state.u_ref.view(np.uint8)

    done = 0
    while done < n_steps:
        k = min(CHUNK_STEPS, n_steps - done)
        uniforms = rng.uniforms(k * per_step)
        sl = slice(done, done + k)
        kern.run_learner(
            algo, mdp.cdf, mdp.last_support, mdp.rewards, mdp.gamma, hp.c_b, hp.iota, hp.H,
            options.threshold(mdp.gamma), bool(options.reference_update_next_state),
            state.q, state.q_ucb, state.q_lcb, state.q_ref, state.q_lazy, state.q_snapshot,
            state.visit_count, state.mu_ref, state.sigma_ref, state.mu_adv, state.sigma_adv,
            state.b_big_ref, state.delta_ref, state.staleness, state.v, state.v_lcb, state.v_ref,
            u_ref, mask, vals, scalars, uniforms, k,
            out["states"][sl], out["actions"][sl], out["rewards"][sl], out["next_states"][sl],
            out["switched"][sl], out["n_after"][sl],
            monitor, qs, flags[0][sl] if monitor else flags[0], flags[1][sl] if monitor else flags[1],
            flags[2][sl] if monitor else flags[2], hard, events,
        )
        done += k

    state.t, state.current_state = int(scalars[0]), int(scalars[1])
    state.u_switch, state.switch_count = bool(scalars[2]), int(scalars[3])
    state.buffer = {(int(i), int(j)): float(vals[i, j]) for i, j in zip(*np.nonzero(mask))}

    hard_violations = {}
    if monitor:
        hard_violations = {
            "monotonicity": int(hard[0]),
            "v_lcb_monotonicity": int(hard[1]),
            "buffer_equivalence": int(hard[2]),
            "visit_sum": int(int(state.visit_count.sum()) != state.t),
        }
    return RunTrace(
        algorithm=algorithm,
        n_states=S,
        n_actions=A,
        t0=t0,
        initial_policy=initial_policy,
        events=events,
        monitored=monitor,
        optimism_viol=flags[0] if monitor else None,
        pessimism_viol=flags[1] if monitor else None,
        proximity_viol=flags[2] if monitor else None,
        hard_violations=hard_violations,
        switch_count=state.switch_count,
        **{k: v.astype(bool) if k == "switched" else v for k, v in out.items()},
    )
