"""Learners: the low-switching reference-advantage Q-learner and baselines."""

from . import backend
from .engine import RunTrace, run
from .state import ALGORITHMS, AgentOptions, LearnerState, init_state
from .updates import (
    STEP_FUNCTIONS,
    HorizonExceeded,
    StepRecord,
    apply_lazy_switch,
    combine_and_propagate,
    greedy_q_step,
    maybe_update_reference,
    random_step,
    select_action,
    step,
    track_staleness,
    ucb_q_advantage_eager_step,
    ucb_q_step,
    update_moments,
    update_q_lcb,
    update_q_reference,
    update_q_ucb,
    update_reference_bonus,
)

__all__ = [
    "ALGORITHMS", "AgentOptions", "HorizonExceeded", "LearnerState", "RunTrace", "STEP_FUNCTIONS",
    "StepRecord", "apply_lazy_switch", "backend", "combine_and_propagate", "greedy_q_step",
    "init_state", "maybe_update_reference", "random_step", "run", "select_action", "step",
    "track_staleness", "ucb_q_advantage_eager_step", "ucb_q_step", "update_moments",
    "update_q_lcb", "update_q_reference", "update_q_ucb", "update_reference_bonus",
]
