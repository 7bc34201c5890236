"""Per-operation updates of the low-switching learner and its baselines.

This is the readable single-step path. Every expression is written in the
same order as in the kernels so that both produce bit-identical tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import schedule
from ..mdp import RngStream, TabularMdp, draw_next_state
from ..schedule import HyperParams
from .state import REFERENCE_GAP, AgentOptions, LearnerState

_DEFAULT_OPTIONS = AgentOptions()


class HorizonExceeded(RuntimeError):
    """Raised when stepping a learner past its configured horizon."""


@dataclass(frozen=True)
class StepRecord:
    """One online interaction step.

    ``switched`` marks steps after which the execution policy changes, so
    the new policy acts from step ``t + 1`` on.
    """

    t: int
    state: int
    action: int
    reward: float
    next_state: int
    switched: bool
    n_after: int


def _argmax(row) -> int:
    best = 0
    for j in range(1, len(row)):
        if row[j] > row[best]:
            best = j
    return best


def select_action(state: LearnerState, s: int) -> int:
    """Lowest-index maximizer of ``q_lazy(s, .)``."""
    return _argmax(state.q_lazy[s])


def update_q_ucb(state: LearnerState, hp: HyperParams, s, a, r, s_next, n) -> float:
    eta = schedule.step_learning_rate(hp.H, n)
    b = schedule.hoeffding_bonus(hp.c_b, hp.iota, hp.gamma, n)
    new = (1.0 - eta) * state.q_ucb[s, a] + eta * (r + hp.gamma * state.v[s_next] + b)
    state.q_ucb[s, a] = new
    return new


def update_q_lcb(state: LearnerState, hp: HyperParams, s, a, r, s_next, n) -> float:
    eta = schedule.step_learning_rate(hp.H, n)
    b = schedule.hoeffding_bonus(hp.c_b, hp.iota, hp.gamma, n)
    new = (1.0 - eta) * state.q_lcb[s, a] + eta * (r + hp.gamma * state.v_lcb[s_next] - b)
    state.q_lcb[s, a] = new
    return new


def update_moments(state: LearnerState, s, a, v_next, v_ref_next, n, H):
    inv = 1.0 / n
    eta = schedule.step_learning_rate(H, n)
    state.mu_ref[s, a] = (1.0 - inv) * state.mu_ref[s, a] + inv * v_ref_next
    state.sigma_ref[s, a] = (1.0 - inv) * state.sigma_ref[s, a] + inv * (v_ref_next * v_ref_next)
    adv = v_next - v_ref_next
    state.mu_adv[s, a] = (1.0 - eta) * state.mu_adv[s, a] + eta * adv
    state.sigma_adv[s, a] = (1.0 - eta) * state.sigma_adv[s, a] + eta * (adv * adv)
    return state.mu_ref[s, a], state.sigma_ref[s, a], state.mu_adv[s, a], state.sigma_adv[s, a]


def update_reference_bonus(state: LearnerState, hp: HyperParams, s, a, n):
    b_next = schedule.reference_bonus(
        hp.c_b, hp.iota, hp.gamma, n,
        state.mu_ref[s, a], state.sigma_ref[s, a], state.mu_adv[s, a], state.sigma_adv[s, a],
    )
    state.delta_ref[s, a] = b_next - state.b_big_ref[s, a]
    state.b_big_ref[s, a] = b_next
    return state.delta_ref[s, a], state.b_big_ref[s, a]


def update_q_reference(state: LearnerState, hp: HyperParams, s, a, r, s_next, n) -> float:
    """Reference-advantage estimate; moments and reference bonus must be fresh."""
    eta = schedule.step_learning_rate(hp.H, n)
    b_r = (
        state.b_big_ref[s, a]
        + (1.0 - eta) * state.delta_ref[s, a] / eta
        + schedule.lower_order_correction(hp.c_b, hp.iota, hp.gamma, n)
    )
    target = r + hp.gamma * (state.v[s_next] - state.v_ref[s_next] + state.mu_ref[s, a]) + b_r
    new = (1.0 - eta) * state.q_ref[s, a] + eta * target
    state.q_ref[s, a] = new
    return new


def combine_and_propagate(state: LearnerState, s, a) -> None:
    state.q[s, a] = min(state.q_ref[s, a], state.q_ucb[s, a], state.q[s, a])
    state.v[s] = state.q[s].max()
    state.v_lcb[s] = max(state.q_lcb[s].max(), state.v_lcb[s])


def track_staleness(state: LearnerState, s, a, threshold: float | None = None) -> bool:
    """Accumulate ``q_snapshot - q`` and raise the switch flag past the threshold."""
    if threshold is None:
        threshold = 1.0 / (1.0 - state.gamma)
    state.staleness[s, a] = state.staleness[s, a] + (state.q_snapshot[s, a] - state.q[s, a])
    if state.staleness[s, a] > threshold:
        state.q_snapshot[s, a] = state.q[s, a]
        state.u_switch = True
        state.staleness[s, a] = 0.0
        return True
    return False


def apply_lazy_switch(state: LearnerState) -> None:
    """Copy buffered Q entries into ``q_lazy`` and count one policy switch."""
    for (i, j), value in state.buffer.items():
        state.q_lazy[i, j] = value
    state.buffer.clear()
    state.u_switch = False
    state.switch_count += 1


def maybe_update_reference(state: LearnerState, s) -> None:
    if state.v[s] - state.v_lcb[s] > REFERENCE_GAP:
        state.v_ref[s] = state.v[s]
        state.u_ref[s] = True
    elif state.u_ref[s]:
        state.v_ref[s] = state.v[s]
        state.u_ref[s] = False


def _begin(state: LearnerState, hp: HyperParams):
    if state.t >= hp.horizon_T:
        raise HorizonExceeded(f"step {state.t + 1} exceeds horizon_T={hp.horizon_T}")


def _visit(state: LearnerState, mdp: TabularMdp, rng: RngStream, s: int, a: int):
    s_next = draw_next_state(mdp, s, a, rng.random())
    state.visit_count[s, a] += 1
    return float(mdp.rewards[s, a]), s_next, int(state.visit_count[s, a])


def _finish(state: LearnerState, s, a, r, s_next, switched, n) -> StepRecord:
    state.t += 1
    state.current_state = s_next
    return StepRecord(state.t, s, a, r, s_next, switched, n)


def _advantage_updates(state: LearnerState, hp: HyperParams, s, a, r, s_next, n):
    update_q_ucb(state, hp, s, a, r, s_next, n)
    update_q_lcb(state, hp, s, a, r, s_next, n)
    update_moments(state, s, a, state.v[s_next], state.v_ref[s_next], n, hp.H)
    update_reference_bonus(state, hp, s, a, n)
    update_q_reference(state, hp, s, a, r, s_next, n)
    combine_and_propagate(state, s, a)


def step(
    state: LearnerState,
    mdp: TabularMdp,
    hp: HyperParams,
    rng: RngStream,
    options: AgentOptions = _DEFAULT_OPTIONS,
) -> StepRecord:
    """One step of the low-switching reference-advantage learner.

    Order per step: act greedily on ``q_lazy``; sample; count; update the
    UCB, LCB and reference estimates; take the min into ``q``; refresh
    ``v``/``v_lcb``; apply a pending switch from the buffer; buffer the new
    ``q`` entry; advance the staleness tracker (possibly raising a switch for
    the next step); settle the reference at ``s_t``.
    """
    _begin(state, hp)
    s = state.current_state
    a = select_action(state, s)
    r, s_next, n = _visit(state, mdp, rng, s, a)
    _advantage_updates(state, hp, s, a, r, s_next, n)
    switched = state.u_switch
    if switched:
        apply_lazy_switch(state)
    state.buffer[(s, a)] = float(state.q[s, a])
    track_staleness(state, s, a, options.threshold(state.gamma))
    maybe_update_reference(state, s)
    if options.reference_update_next_state:
        maybe_update_reference(state, s_next)
    return _finish(state, s, a, r, s_next, switched, n)


def _greedy_change(state: LearnerState, s: int, before: int) -> bool:
    changed = _argmax(state.q[s]) != before
    if changed:
        state.switch_count += 1
    return changed


def ucb_q_step(state, mdp, hp, rng, options=_DEFAULT_OPTIONS) -> StepRecord:
    """Hoeffding-bonus Q-learning acting greedily on ``q`` every step."""
    _begin(state, hp)
    s = state.current_state
    a = _argmax(state.q[s])
    r, s_next, n = _visit(state, mdp, rng, s, a)
    update_q_ucb(state, hp, s, a, r, s_next, n)
    state.q[s, a] = min(state.q_ucb[s, a], state.q[s, a])
    state.v[s] = state.q[s].max()
    return _finish(state, s, a, r, s_next, _greedy_change(state, s, a), n)


def ucb_q_advantage_eager_step(state, mdp, hp, rng, options=_DEFAULT_OPTIONS) -> StepRecord:
    """Same estimates as :func:`step` but greedy on ``q`` with no lazy buffer."""
    _begin(state, hp)
    s = state.current_state
    a = _argmax(state.q[s])
    r, s_next, n = _visit(state, mdp, rng, s, a)
    _advantage_updates(state, hp, s, a, r, s_next, n)
    switched = _greedy_change(state, s, a)
    maybe_update_reference(state, s)
    if options.reference_update_next_state:
        maybe_update_reference(state, s_next)
    return _finish(state, s, a, r, s_next, switched, n)


def greedy_q_step(state, mdp, hp, rng, options=_DEFAULT_OPTIONS) -> StepRecord:
    """Plain Q-learning with rate ``eta_n`` and no bonus."""
    _begin(state, hp)
    s = state.current_state
    a = _argmax(state.q[s])
    r, s_next, n = _visit(state, mdp, rng, s, a)
    eta = schedule.step_learning_rate(hp.H, n)
    state.q[s, a] = (1.0 - eta) * state.q[s, a] + eta * (r + hp.gamma * state.v[s_next])
    state.v[s] = state.q[s].max()
    return _finish(state, s, a, r, s_next, _greedy_change(state, s, a), n)


def random_step(state, mdp, hp, rng, options=_DEFAULT_OPTIONS) -> StepRecord:
    """Uniform action each step; learns nothing."""
    _begin(state, hp)
    s = state.current_state
    a = min(int(rng.random() * mdp.n_actions), mdp.n_actions - 1)
    r, s_next, n = _visit(state, mdp, rng, s, a)
    return _finish(state, s, a, r, s_next, False, n)


STEP_FUNCTIONS = {
    "main": step,
    "ucb_q": ucb_q_step,
    "ucb_q_adv_eager": ucb_q_advantage_eager_step,
    "greedy_q": greedy_q_step,
    "random": random_step,
}


def greedy_table(q: np.ndarray) -> np.ndarray:
    return np.argmax(q, axis=1)
