"""Learning-rate and exploration-bonus arithmetic.

All functions are pure. The kernels in :mod:`lowswitch.agent` evaluate the
same expressions in the same operation order, so results agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def effective_horizon(gamma: float) -> int:
    """``H = ceil(2 / (1 - gamma))``.

    The quotient is rounded to 9 decimals first so that decimal inputs such
    as 0.9 give 20 rather than 21 from the float error in ``1 - gamma``.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0,1)")
    return math.ceil(round(2.0 / (1.0 - gamma), 9))


@dataclass(frozen=True)
class HyperParams:
    """Bonus constant, confidence level and horizon for one learner.

    ``iota = log(S A T / delta)`` uses the natural logarithm.
    """

    c_b: float
    delta: float
    horizon_T: int
    gamma: float
    n_states: int
    n_actions: int

    def __post_init__(self):
        if not self.c_b >= 0:
            raise ValueError("c_b must be nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0,1)")
        if self.horizon_T < 1:
            raise ValueError("horizon_T must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0,1)")

    @property
    def H(self) -> int:
        return effective_horizon(self.gamma)

    @property
    def iota(self) -> float:
        return math.log(self.n_states * self.n_actions * self.horizon_T / self.delta)


def step_learning_rate(H: int, n: int) -> float:
    """``eta_n = (H + 1) / (H + n)`` for visit count ``n >= 1``."""
    if n < 1:
        raise ValueError("learning rate is defined for n >= 1 (first visit uses n=1)")
    return (H + 1) / (H + n)


def compound_weight_zero(H: int, N: int) -> float:
    return 1.0 if N == 0 else 0.0


def compound_weight(H: int, n: int, N: int) -> float:
    """Weight of the n-th sample in an estimate built from N samples.

    ``eta_n * prod_{i=n+1}^{N} (1 - eta_i)``; 0 when ``N < n``.
    """
    if n == 0:
        return compound_weight_zero(H, N)
    if N < n:
        return 0.0
    w = step_learning_rate(H, n)
    for i in range(n + 1, N + 1):
        w *= 1.0 - step_learning_rate(H, i)
    return w


def compound_weights(H: int, N: int) -> list[float]:
    """All weights ``[eta_1^N, ..., eta_N^N]`` by the backward recurrence.

    ``eta_N^N = eta_N`` and ``eta_{n-1}^N = eta_n^N * eta_{n-1} (1 - eta_n) / eta_n``,
    i.e. each step multiplies in one more ``(1 - eta_i)`` factor.
    """
    if N <= 0:
        return []
    out = [0.0] * N
    tail = 1.0
    for n in range(N, 0, -1):
        out[n - 1] = step_learning_rate(H, n) * tail
        tail *= 1.0 - step_learning_rate(H, n)
    return out


def hoeffding_bonus(c_b: float, iota: float, gamma: float, n: int) -> float:
    """``c_b sqrt(iota / ((1 - gamma)^3 n))``."""
    return c_b * math.sqrt(iota / ((1.0 - gamma) ** 3 * n))


def reference_bonus(
    c_b: float,
    iota: float,
    gamma: float,
    n: int,
    mu_ref: float,
    sigma_ref: float,
    mu_adv: float,
    sigma_adv: float,
) -> float:
    """Variance-aware bonus built from the reference and advantage moments.

    Empirical variances are clamped at zero before the square root.
    """
    var_ref = max(sigma_ref - mu_ref * mu_ref, 0.0)
    var_adv = max(sigma_adv - mu_adv * mu_adv, 0.0)
    return c_b * math.sqrt(iota / n) * (
        math.sqrt(var_ref) + (1.0 / math.sqrt(1.0 - gamma)) * math.sqrt(var_adv)
    )


def lower_order_correction(c_b: float, iota: float, gamma: float, n: int) -> float:
    """``c_b iota^2 / (n^{3/4} (1 - gamma)^2)``."""
    return c_b * iota**2 / (n**0.75 * (1.0 - gamma) ** 2)
