"""Run one config across its seeds and write per-run traces plus a summary."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import metrics
from ..agent import AgentOptions, init_state, run
from ..mdp import STREAM_AGENT, STREAM_ENV, RngStream, TabularMdp, load_mdp, make_chain_mdp, make_random_mdp, validate
from ..oracle import OracleSolution, value_iteration
from ..schedule import HyperParams
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

TRACE_HEADER = (
    "t,state,action,reward,next_state,switched,regret_stat_cum,regret_ns_cum,"
    "switches_cum,optimism_viol_cum,pessimism_viol_cum,proximity_viol_cum"
).split(",")
FULL_TRACE_STEPS = 100_000
CURVE_POINTS = 20


@dataclass
class RunSummary:
    seed: int
    stream_id: str
    steps: int = 0
    final_regret: float | None = None
    final_regret_ns: float | None = None
    regret_quarter: float | None = None
    regret_ratio: float | None = None
    switch_count: int = 0
    violations: dict = field(default_factory=dict)
    hard_failure: bool = False
    trace_file: str | None = None
    error: str | None = None
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        # Wall-clock time is reported separately so summaries stay reproducible.
        d = asdict(self)
        d.pop("wall_seconds")
        return d


def build_mdp(env: dict, base_dir: Path | str = ".") -> TabularMdp:
    kind = env["type"]
    if kind == "random":
        rng = RngStream(int(env.get("seed", 0)), STREAM_ENV)
        return make_random_mdp(
            env["n_states"], env["n_actions"], env["gamma"], env.get("concentration", 1.0), rng
        )
    if kind == "chain":
        return make_chain_mdp(
            env["n_states"], env["slip"], env["gamma"],
            right_reward=env.get("right_reward", 1.0), left_reward=env.get("left_reward", 0.01),
        )
    if kind == "file":
        path = Path(env["path"])
        return load_mdp(path if path.is_absolute() else Path(base_dir) / path)
    if kind == "inline":
        return TabularMdp.from_dict(env["mdp"])
    raise ConfigError(f"env.type: unknown environment {kind!r}")


def prepare(config: ExperimentConfig) -> tuple[TabularMdp, OracleSolution]:
    """Build and check the environment and solve it; config problems raise :class:`ConfigError`."""
    try:
        mdp = build_mdp(config.env, config.base_dir)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"env: {exc}") from exc
    problems = validate(mdp)
    if problems:
        raise ConfigError("env: invalid MDP: " + "; ".join(problems[:5]))
    if config.initial_state >= mdp.n_states:
        raise ConfigError(f"initial_state: {config.initial_state} out of range for {mdp.n_states} states")
    return mdp, value_iteration(mdp, tol=config.oracle_tol)


def stream_id(seed: int) -> str:
    return f"{seed}:{STREAM_AGENT}"


def _rows(trace, series: metrics.MetricsSeries, T: int):
    stride = math.ceil(T / FULL_TRACE_STEPS) if T > FULL_TRACE_STEPS else 1
    steps = trace.steps
    keep = (steps % stride == 0) | trace.switched if stride > 1 else np.ones(len(steps), dtype=bool)
    idx = np.flatnonzero(keep)

    def col(arr, cast):
        if arr is None:
            return [""] * len(idx)
        return [cast(x) for x in np.asarray(arr)[idx].tolist()]

    cols = [
        col(steps, int), col(trace.states, int), col(trace.actions, int), col(trace.rewards, repr),
        col(trace.next_states, int), col(trace.switched.astype(np.int64), int),
        col(series.regret_stat, repr), col(series.regret_ns, repr), col(series.switches, int),
        col(series.optimism_viol, int), col(series.pessimism_viol, int), col(series.proximity_viol, int),
    ]
    return zip(*cols)


def write_trace(path: Path, trace, series: metrics.MetricsSeries, T: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        writer.writerows(_rows(trace, series, T))


def execute_seed(config: ExperimentConfig, mdp: TabularMdp, solution: OracleSolution, seed: int):
    """One fully independent run; returns ``(summary, trace, series)``."""
    hp = HyperParams(config.c_b, config.delta, config.T, mdp.gamma, mdp.n_states, mdp.n_actions)
    options = AgentOptions(config.switch_threshold, config.reference_update_next_state)
    state = init_state(mdp.n_states, mdp.n_actions, mdp.gamma, config.initial_state)
    q_star = solution.q_star if config.invariants else None
    trace = run(
        state, mdp, hp, RngStream(seed, STREAM_AGENT), config.T, config.algorithm,
        options=options, q_star=q_star, backend=config.backend,
    )
    series, _ = metrics.compute_metrics(trace, mdp, solution, nonstationary=config.nonstationary_regret)
    summary = RunSummary(seed=seed, stream_id=stream_id(seed), steps=len(trace))
    summary.final_regret = float(series.regret_stat[-1])
    if series.regret_ns is not None:
        summary.final_regret_ns = float(series.regret_ns[-1])
    if config.T >= 4:
        summary.regret_quarter = float(series.regret_stat[config.T // 4 - 1])
        if summary.regret_quarter > 0:
            summary.regret_ratio = summary.final_regret / summary.regret_quarter
    summary.switch_count = int(series.switches[-1])
    if trace.monitored:
        summary.violations = metrics.invariant_report(trace)
        summary.hard_failure = metrics.hard_failure(summary.violations)
    return summary, trace, series


def _worker(args) -> RunSummary:
    config, mdp, solution, seed = args
    start = time.perf_counter()
    try:
        summary, trace, series = execute_seed(config, mdp, solution, seed)
        if config.write_traces:
            name = f"trace_seed{seed}.csv"
            write_trace(config.output_dir / name, trace, series, config.T)
            summary.trace_file = name
    except Exception as exc:  # isolate per-run failures
        log.exception("seed %d failed", seed)
        summary = RunSummary(seed=seed, stream_id=stream_id(seed), error=f"{type(exc).__name__}: {exc}")
    summary.wall_seconds = time.perf_counter() - start
    return summary


def _stats(values) -> dict | None:
    vals = np.array([v for v in values if v is not None], dtype=np.float64)
    if len(vals) == 0:
        return None
    return {
        "mean": float(vals.mean()),
        "min": float(vals.min()),
        "max": float(vals.max()),
        "std": float(vals.std()),
    }


def summarize(runs: list[RunSummary]) -> dict:
    """Mean/min/max/std of the final metrics plus the regret(T)/regret(T/4) diagnostic."""
    ok = [r for r in runs if r.error is None]
    agg = {
        "n_runs": len(runs),
        "n_failed": len(runs) - len(ok),
        "final_regret": _stats(r.final_regret for r in ok),
        "final_regret_ns": _stats(r.final_regret_ns for r in ok),
        "regret_quarter": _stats(r.regret_quarter for r in ok),
        "switch_count": _stats(r.switch_count for r in ok),
        "regret_ratio": None,
        "mean_run_ratio": _stats(r.regret_ratio for r in ok),
    }
    if agg["final_regret"] and agg["regret_quarter"] and agg["regret_quarter"]["mean"] > 0:
        agg["regret_ratio"] = agg["final_regret"]["mean"] / agg["regret_quarter"]["mean"]
    totals: dict[str, int] = {}
    for r in ok:
        for k, v in r.violations.items():
            totals[k] = totals.get(k, 0) + v
    agg["violations"] = totals
    agg["hard_failure"] = any(r.hard_failure for r in ok)
    return agg


def theoretical_curve(config: ExperimentConfig, mdp: TabularMdp, points: int = CURVE_POINTS) -> list[dict]:
    hp = HyperParams(config.c_b, config.delta, config.T, mdp.gamma, mdp.n_states, mdp.n_actions)
    ts = sorted({max(1, round(config.T * k / points)) for k in range(1, points + 1)})
    return [
        {"t": t, "value": metrics.theoretical_bound(mdp.n_states, mdp.n_actions, mdp.gamma, t, hp.iota)}
        for t in ts
    ]


def run_experiment(config: ExperimentConfig) -> tuple[list[RunSummary], dict]:
    """Run every seed, write ``trace_seed<seed>.csv`` files and ``summary.json``.

    Wall-clock times go to ``timing.json`` which is not part of the
    reproducible outputs.
    """
    mdp, solution = prepare(config)
    out = config.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    jobs = [(config, mdp, solution, seed) for seed in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(jobs))) as pool:
            runs = list(pool.map(_worker, jobs))
    else:
        runs = [_worker(job) for job in jobs]

    summary = {
        "config_hash": config.config_hash(),
        "runs": [r.to_dict() for r in runs],
        "aggregate": summarize(runs),
        "theoretical_curve": theoretical_curve(config, mdp),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=False) + "\n")
    timing = {str(r.seed): r.wall_seconds for r in runs}
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    return runs, summary
