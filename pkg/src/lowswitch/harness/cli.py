"""Command-line entry point: ``lowswitch {run,oracle,validate,sweep}``."""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

from ..agent.state import ALGORITHMS
from ..mdp import load_mdp, validate
from ..oracle import ConvergenceError, value_iteration
from .config import C_B_PRESETS, ConfigError, load_config
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("lowswitch")

SWEEPABLE = {
    "c_b": lambda v: C_B_PRESETS[v] if v in C_B_PRESETS else float(v),
    "delta": float,
    "T": int,
    "switch_threshold": float,
    "algorithm": str,
}


def _load_mdp(path):
    try:
        return load_mdp(path)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read MDP ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _exit_code(runs) -> int:
    if any(r.hard_failure for r in runs):
        return EXIT_INVARIANT
    if any(r.error for r in runs):
        return EXIT_RUNTIME
    return EXIT_OK


def _report(runs, summary, out_dir) -> None:
    agg = summary["aggregate"]
    for r in runs:
        if r.error:
            print(f"seed {r.seed}: FAILED {r.error}")
        else:
            print(f"seed {r.seed}: regret {r.final_regret:.4f} switches {r.switch_count}")
    if agg["final_regret"]:
        print(f"mean regret {agg['final_regret']['mean']:.4f}; ratio {agg['regret_ratio']}")
    print(f"wrote {out_dir / 'summary.json'}")


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.out:
        config = config.with_overrides(output_dir=Path(args.out))
    if args.workers:
        config = config.with_overrides(workers=args.workers)
    runs, summary = run_experiment(config)
    _report(runs, summary, config.output_dir)
    return _exit_code(runs)


def cmd_oracle(args) -> int:
    mdp = _load_mdp(args.mdp)
    problems = validate(mdp)
    if problems:
        raise ConfigError("invalid MDP: " + "; ".join(problems[:5]))
    sol = value_iteration(mdp, tol=args.tol)
    text = json.dumps(sol.to_dict())
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    mdp = _load_mdp(args.mdp)
    problems = validate(mdp)
    for p in problems:
        print(p)
    if problems:
        return EXIT_CONFIG
    print(f"ok: {mdp.n_states} states, {mdp.n_actions} actions, gamma={mdp.gamma}")
    return EXIT_OK


def parse_param(item: str) -> tuple[str, list]:
    name, sep, values = item.partition("=")
    if not sep or not values:
        raise ConfigError(f"--param {item!r}: expected name=v1,v2,...")
    if name not in SWEEPABLE:
        raise ConfigError(f"--param {name!r}: sweepable fields are {', '.join(sorted(SWEEPABLE))}")
    try:
        return name, [SWEEPABLE[name](v) for v in values.split(",")]
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"--param {item!r}: {exc}") from exc


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    if args.out:
        base = base.with_overrides(output_dir=Path(args.out))
    grid = [parse_param(p) for p in args.param]
    names = [g[0] for g in grid]
    code = EXIT_OK
    index = []
    for values in itertools.product(*(g[1] for g in grid)):
        changes = dict(zip(names, values))
        label = ",".join(f"{k}={v}" for k, v in changes.items())
        if changes.get("algorithm", base.algorithm) not in ALGORITHMS:
            raise ConfigError(f"--param algorithm: unknown algorithm {changes['algorithm']!r}")
        config = base.with_overrides(output_dir=base.output_dir / label, **changes)
        runs, summary = run_experiment(config)
        print(f"[{label}]")
        _report(runs, summary, config.output_dir)
        index.append({"params": label, "config_hash": summary["config_hash"], "aggregate": summary["aggregate"]})
        code = max(code, _exit_code(runs))
    base.output_dir.mkdir(parents=True, exist_ok=True)
    (base.output_dir / "sweep.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowswitch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every seed of an experiment config")
    p.add_argument("config")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--workers", type=int, help="override the worker count")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="solve an MDP JSON file exactly")
    p.add_argument("mdp")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("validate", help="check an MDP JSON file")
    p.add_argument("mdp")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="run a config over a grid of parameter values")
    p.add_argument("config")
    p.add_argument("--param", action="append", required=True, help="name=v1,v2,... (repeatable)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; bad invocations are config errors here.
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, OSError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
