"""Tabular infinite-horizon discounted MDPs: container, validation, generators,
sampling and JSON serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROW_SUM_TOL = 1e-12

# Stream ids reserved for the different consumers of one seed.
STREAM_ENV = 0
STREAM_AGENT = 1


class ParameterError(ValueError):
    """Raised when a generator or constructor receives an out-of-range parameter."""


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by numpy's Philox generator, whose 128-bit key is the pair of
    64-bit integers. Identical keys give identical sequences; scalar draws
    and block draws consume the underlying counter identically, so
    ``[rng.random() for _ in range(k)] == list(rng.uniforms(k))`` on fresh
    streams.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise ParameterError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = self.seed | (self.stream_id << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def random(self) -> float:
        return float(self._gen.random())

    def uniforms(self, n: int) -> np.ndarray:
        return self._gen.random(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Immutable tabular MDP ``(S, A, gamma, P, r)`` with deterministic rewards.

    ``transitions[s, a]`` is the next-state distribution and ``rewards[s, a]``
    the reward in ``[0, 1]``. Arrays are made read-only on construction.
    """

    n_states: int
    n_actions: int
    gamma: float
    transitions: np.ndarray
    rewards: np.ndarray
    name: str = "mdp"
    _cdf: np.ndarray = field(init=False, repr=False)
    _last: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = np.array(self.transitions, dtype=np.float64)
        r = np.array(self.rewards, dtype=np.float64)
        if p.shape != (self.n_states, self.n_actions, self.n_states):
            raise ParameterError(
                f"transitions shape {p.shape} != {(self.n_states, self.n_actions, self.n_states)}"
            )
        if r.shape != (self.n_states, self.n_actions):
            raise ParameterError(f"rewards shape {r.shape} != {(self.n_states, self.n_actions)}")
        cdf = np.cumsum(p, axis=2)
        # Last index with positive mass: the fallback when u >= cdf[-1] through rounding.
        positive = p > 0
        last = np.where(
            positive.any(axis=2),
            self.n_states - 1 - np.argmax(positive[:, :, ::-1], axis=2),
            self.n_states - 1,
        ).astype(np.int64)
        for arr in (p, r, cdf, last):
            arr.setflags(write=False)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "_cdf", cdf)
        object.__setattr__(self, "_last", last)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    @property
    def last_support(self) -> np.ndarray:
        return self._last

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TabularMdp":
        return cls(
            n_states=int(data["n_states"]),
            n_actions=int(data["n_actions"]),
            gamma=float(data["gamma"]),
            transitions=np.asarray(data["transitions"], dtype=np.float64),
            rewards=np.asarray(data["rewards"], dtype=np.float64),
            name=str(data.get("name", "mdp")),
        )


def validate(mdp: TabularMdp) -> list[str]:
    """Check every MDP invariant; an empty list means the MDP is valid."""
    problems = []
    if not 0.0 < mdp.gamma < 1.0:
        problems.append(f"gamma {mdp.gamma!r} not in (0,1)")
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            row = mdp.transitions[s, a]
            if np.any(row < 0) or not np.all(np.isfinite(row)):
                problems.append(f"negative or non-finite probability at ({s},{a})")
            if abs(float(row.sum()) - 1.0) > ROW_SUM_TOL:
                problems.append(f"row sum ≠ 1 at ({s},{a})")
            r = mdp.rewards[s, a]
            if not 0.0 <= r <= 1.0:
                problems.append(f"reward out of [0,1] at ({s},{a})")
    return problems


def is_valid(mdp: TabularMdp) -> bool:
    return not validate(mdp)


def make_random_mdp(
    n_states: int,
    n_actions: int,
    gamma: float,
    dirichlet_concentration: float,
    rng: RngStream,
) -> TabularMdp:
    """Random MDP with symmetric-Dirichlet rows and Uniform[0,1] rewards."""
    if n_states < 1 or n_actions < 1:
        raise ParameterError("n_states and n_actions must be >= 1")
    if not 0.0 < gamma < 1.0:
        raise ParameterError("gamma must lie in (0,1)")
    if not dirichlet_concentration > 0:
        raise ParameterError("dirichlet_concentration must be > 0")
    gen = rng.generator
    if n_states == 1:
        p = np.ones((1, n_actions, 1))
    else:
        alpha = np.full(n_states, float(dirichlet_concentration))
        p = gen.dirichlet(alpha, size=(n_states, n_actions))
        # Renormalize so that every row sums to 1 within ROW_SUM_TOL.
        p = p / p.sum(axis=2, keepdims=True)
    r = gen.random((n_states, n_actions))
    return TabularMdp(n_states, n_actions, gamma, p, r, name=f"random({n_states},{n_actions})")


LEFT, RIGHT = 0, 1


def make_chain_mdp(
    n_states: int,
    slip_prob: float,
    gamma: float,
    *,
    right_reward: float = 1.0,
    left_reward: float = 0.01,
) -> TabularMdp:
    """RiverSwim-style chain with actions ``LEFT=0`` and ``RIGHT=1``.

    ``RIGHT`` advances with probability ``1 - slip_prob`` and otherwise stays
    (at state 0) or drifts one state left. ``LEFT`` moves left
    deterministically. Reward ``right_reward`` at (last, RIGHT) and
    ``left_reward`` at (0, LEFT); zero elsewhere.
    """
    if n_states < 2:
        raise ParameterError("chain needs n_states >= 2")
    if not 0.0 <= slip_prob < 1.0:
        raise ParameterError("slip_prob must lie in [0,1)")
    if not 0.0 < gamma < 1.0:
        raise ParameterError("gamma must lie in (0,1)")
    if not (0.0 <= right_reward <= 1.0 and 0.0 <= left_reward <= 1.0):
        raise ParameterError("chain rewards must lie in [0,1]")
    last = n_states - 1
    p = np.zeros((n_states, 2, n_states))
    r = np.zeros((n_states, 2))
    for s in range(n_states):
        p[s, LEFT, max(s - 1, 0)] = 1.0
        ahead = min(s + 1, last)
        behind = max(s - 1, 0)
        p[s, RIGHT, ahead] += 1.0 - slip_prob
        p[s, RIGHT, behind] += slip_prob
    r[last, RIGHT] = right_reward
    r[0, LEFT] = left_reward
    return TabularMdp(n_states, 2, gamma, p, r, name=f"chain({n_states},{slip_prob})")


def draw_next_state(mdp: TabularMdp, s: int, a: int, u: float) -> int:
    """Inverse-CDF lookup of uniform ``u`` in row ``(s, a)``."""
    cdf = mdp.cdf[s, a]
    for j in range(mdp.n_states):
        if u < cdf[j]:
            return j
    return int(mdp.last_support[s, a])


def sample_transition(mdp: TabularMdp, s: int, a: int, rng: RngStream) -> int:
    if not (0 <= s < mdp.n_states and 0 <= a < mdp.n_actions):
        raise IndexError(f"(s={s}, a={a}) out of range for S={mdp.n_states}, A={mdp.n_actions}")
    return draw_next_state(mdp, s, a, rng.random())


def save_mdp(mdp: TabularMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp.to_dict()))


def load_mdp(path: str | Path) -> TabularMdp:
    return TabularMdp.from_dict(json.loads(Path(path).read_text()))
