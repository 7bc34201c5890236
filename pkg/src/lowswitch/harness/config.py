"""Experiment configuration: a single JSON document validated against a schema."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from ..agent.state import ALGORITHMS

THEORY_C_B = 16.0
C_B_PRESETS = {"default": 2.0, "theory": THEORY_C_B}

_GAMMA = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_COUNT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["env", "algorithm", "hyperparams", "seeds"],
    "properties": {
        "env": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "n_states", "n_actions", "gamma"],
                    "properties": {
                        "type": {"const": "random"},
                        "n_states": _COUNT,
                        "n_actions": _COUNT,
                        "gamma": _GAMMA,
                        "concentration": {"type": "number", "exclusiveMinimum": 0},
                        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "n_states", "slip", "gamma"],
                    "properties": {
                        "type": {"const": "chain"},
                        "n_states": {"type": "integer", "minimum": 2},
                        "slip": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                        "gamma": _GAMMA,
                        "right_reward": {"type": "number", "minimum": 0, "maximum": 1},
                        "left_reward": {"type": "number", "minimum": 0, "maximum": 1},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "path"],
                    "properties": {"type": {"const": "file"}, "path": {"type": "string", "minLength": 1}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "mdp"],
                    "properties": {"type": {"const": "inline"}, "mdp": {"type": "object"}},
                },
            ]
        },
        "algorithm": {"enum": sorted(ALGORITHMS)},
        "hyperparams": {
            "type": "object",
            "additionalProperties": False,
            "required": ["T"],
            "properties": {
                "c_b": {"oneOf": [{"type": "number", "minimum": 0}, {"enum": sorted(C_B_PRESETS)}]},
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "T": _COUNT,
            },
        },
        "seeds": {
            "type": "array",
            "minItems": 1,
            "uniqueItems": True,
            "items": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        },
        "initial_state": {"type": "integer", "minimum": 0},
        "switch_threshold": {
            "oneOf": [{"type": "null"}, {"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]
        },
        "reference_update_next_state": {"type": "boolean"},
        "monitors": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "invariants": {"type": "boolean"},
                "oracle_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "nonstationary_regret": {"type": "boolean"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string", "minLength": 1}, "traces": {"type": "boolean"}},
        },
        "workers": {"type": "integer", "minimum": 1},
        "backend": {"enum": [None, "cython", "python"]},
    },
}


class ConfigError(ValueError):
    """Configuration could not be parsed or failed validation."""


@dataclass(frozen=True)
class ExperimentConfig:
    env: dict
    algorithm: str
    T: int
    seeds: tuple[int, ...]
    c_b: float = 2.0
    delta: float = 0.1
    initial_state: int = 0
    switch_threshold: float | None = None
    reference_update_next_state: bool = False
    invariants: bool = True
    oracle_tol: float = 1e-10
    nonstationary_regret: bool = True
    output_dir: Path = Path("out")
    write_traces: bool = True
    workers: int = 1
    backend: str | None = None
    base_dir: Path = field(default=Path("."), compare=False)

    def canonical(self) -> dict:
        """Every field that can change a run's results, in JSON-ready form."""
        env = dict(self.env)
        if env["type"] == "file":
            digest = hashlib.sha256(self.resolve(env["path"]).read_bytes()).hexdigest()
            env = {"type": "file", "sha256": digest}
        threshold = self.switch_threshold
        if threshold is not None and math.isinf(threshold):
            threshold = "inf"
        return {
            "env": env,
            "algorithm": self.algorithm,
            "T": self.T,
            "seeds": list(self.seeds),
            "c_b": self.c_b,
            "delta": self.delta,
            "initial_state": self.initial_state,
            "switch_threshold": threshold,
            "reference_update_next_state": self.reference_update_next_state,
            "invariants": self.invariants,
            "oracle_tol": self.oracle_tol,
            "nonstationary_regret": self.nonstationary_regret,
        }

    def config_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def _describe(err: jsonschema.ValidationError) -> str:
    where = ".".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "uniqueItems":
        return f"{where}: duplicate entries are not allowed"
    return f"{where}: {err.message}"


def config_from_dict(raw: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    """Validate ``raw`` and build an :class:`ExperimentConfig`."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(_describe(e) for e in errors))
    raw = copy.deepcopy(raw)
    base_dir = Path(base_dir)
    hyper = raw["hyperparams"]
    c_b = hyper.get("c_b", "default")
    if isinstance(c_b, str):
        c_b = C_B_PRESETS[c_b]
    threshold = raw.get("switch_threshold")
    if threshold == "inf":
        threshold = math.inf
    monitors = raw.get("monitors", {})
    output = raw.get("output", {})
    out_dir = Path(output.get("dir", "out"))
    return ExperimentConfig(
        env=raw["env"],
        algorithm=raw["algorithm"],
        T=int(hyper["T"]),
        seeds=tuple(int(s) for s in raw["seeds"]),
        c_b=float(c_b),
        delta=float(hyper.get("delta", 0.1)),
        initial_state=int(raw.get("initial_state", 0)),
        switch_threshold=None if threshold is None else float(threshold),
        reference_update_next_state=bool(raw.get("reference_update_next_state", False)),
        invariants=bool(monitors.get("invariants", True)),
        oracle_tol=float(monitors.get("oracle_tol", 1e-10)),
        nonstationary_regret=bool(raw.get("nonstationary_regret", True)),
        output_dir=out_dir if out_dir.is_absolute() else base_dir / out_dir,
        write_traces=bool(output.get("traces", True)),
        workers=int(raw.get("workers", 1)),
        backend=raw.get("backend"),
        base_dir=base_dir,
    )


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config; relative paths inside resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(raw, path.parent)
