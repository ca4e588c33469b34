"""Virtual queue for the average sensing budget and the drift-plus-penalty cost."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SensingBudget:
    """Per-sense cost ``c`` and per-slot budget ``c_max``; ``alpha = c_max / c``."""

    c: float = 1.0
    c_max: float = 0.5

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValueError("sensing cost c must be positive and finite")
        if not (self.c_max >= 0 and math.isfinite(self.c_max)):
            raise ValueError("budget c_max must be non-negative and finite")
        if self.c_max > self.c:
            raise ValueError("normalized budget c_max / c must not exceed 1")

    @property
    def alpha(self) -> float:
        return self.c_max / self.c

    @classmethod
    def from_alpha(cls, alpha: float, c: float = 1.0) -> "SensingBudget":
        return cls(c=c, c_max=alpha * c)


def _check_action(x) -> int:
    if x not in (0, 1):
        raise ValueError(f"sensing action must be 0 or 1, got {x!r}")
    return int(x)


def queue_update(Q: float, x: int, alpha: float) -> float:
    x = _check_action(x)
    return max(Q + x - alpha, 0.0)


def lyapunov_value(Q: float) -> float:
    return 0.5 * Q * Q


def drift_term(Q: float, x: int, alpha: float) -> float:
    """Realized one-slot change of the quadratic Lyapunov function."""
    return lyapunov_value(queue_update(Q, x, alpha)) - lyapunov_value(Q)


def dpp_cost(loss: float, Q: float, x: int, alpha: float, V: float) -> float:
    if loss < 0:
        raise ValueError(f"prediction loss must be non-negative, got {loss}")
    if V < 0:
        raise ValueError(f"V must be non-negative, got {V}")
    return V * loss + drift_term(Q, x, alpha)


@dataclass
class VirtualQueue:
    budget: SensingBudget
    Q: float = 0.0

    def push(self, x: int) -> float:
        self.Q = queue_update(self.Q, x, self.budget.alpha)
        return self.Q
