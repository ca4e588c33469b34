"""Sensing environment: data stream, virtual queue and sample age around a frozen beam predictor.

Timing: at slot ``t`` the agent sees ``S(t) = (X, Q(t), theta(t))`` where ``X``
is the most recently sensed feature vector. Action ``x(t) = 1`` replaces the
predictor input with slot ``t``'s own features; the queue and age updates take
effect for ``t + 1``. Resetting an episode senses the first slot for free and,
unless ``persist_queue`` is set, restarts the virtual queue: at 0, or drawn
uniformly from ``[0, reset_q_max]`` so training visits both the low-backlog
states an evaluation starts from and the high-backlog states it must recover from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import Dataset
from .lyapunov import SensingBudget, dpp_cost, queue_update
from .nn import MLPParams
from .predictor import label_ranks, log_probabilities


class EpisodeOver(RuntimeError):
    """Raised when stepping an environment whose episode already ended."""


@dataclass(frozen=True)
class DqnState:
    X: np.ndarray
    Q: float
    theta: int

    def __post_init__(self):
        if self.theta < 1:
            raise ValueError(f"age must be >= 1, got {self.theta}")
        if self.Q < 0:
            raise ValueError(f"queue must be >= 0, got {self.Q}")


@dataclass(frozen=True)
class EnvConfig:
    budget: SensingBudget = field(default_factory=lambda: SensingBudget.from_alpha(0.5))
    V: float = 100.0
    horizon: int = 400
    include_age: bool = True
    q_norm: float = 10.0
    age_norm: float = 20.0
    persist_queue: bool = False  # True carries Q across episode resets
    reset_q_max: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.q_norm <= 0 or self.age_norm <= 0:
            raise ValueError("state normalizers must be positive")
        if self.V < 0:
            raise ValueError("V must be non-negative")
        if self.reset_q_max < 0:
            raise ValueError("reset_q_max must be non-negative")

    @property
    def alpha(self) -> float:
        return self.budget.alpha


@dataclass(frozen=True)
class StepInfo:
    slot: int
    x: int
    Q: float  # backlog before the action
    theta: int  # age before the action
    loss: float
    cost: float
    rank: int  # 0-based rank of the true beam under the chosen input
    Q_next: float
    theta_next: int

    @property
    def top1_hit(self) -> bool:
        return self.rank == 0


def select_input(x: int, X_curr, X_old):
    return X_curr if x == 1 else X_old


def age_update(theta: int, x: int) -> int:
    return 1 if x == 1 else theta + 1


def encode_state(S: DqnState, cfg: EnvConfig) -> np.ndarray:
    tail = [S.Q / cfg.q_norm]
    if cfg.include_age:
        tail.append(S.theta / cfg.age_norm)
    return np.concatenate([np.asarray(S.X, dtype=float), tail])


def state_dim(feature_dim: int, cfg: EnvConfig) -> int:
    return feature_dim + (2 if cfg.include_age else 1)


class SensingEnv:
    """One MDP instance over a dataset split. Not thread-safe; use one per worker."""

    def __init__(self, dataset, dnn: MLPParams, cfg: EnvConfig):
        self.data = Dataset.from_records(dataset)
        if len(self.data) < cfg.horizon:
            raise ValueError(f"dataset has {len(self.data)} slots, episode needs {cfg.horizon}")
        if self.data.feature_dim != dnn.d_in:
            raise ValueError("dataset features do not match the predictor input size")
        self.cfg = cfg
        self.dnn = dnn
        # every predictor input is some slot's sensed features, so cache them all
        self.logp = log_probabilities(dnn, self.data.features)
        self.rng = np.random.default_rng([cfg.seed, 2])
        self.Q = 0.0
        self.theta = 1
        self.src = 0
        self.slot = 0
        self.end = 0
        self.done = True

    @property
    def state(self) -> DqnState:
        return DqnState(self.data.features[self.src], self.Q, self.theta)

    @property
    def state_dim(self) -> int:
        return state_dim(self.data.feature_dim, self.cfg)

    def encoded(self) -> np.ndarray:
        return encode_state(self.state, self.cfg)

    def reset(self, start: int | None = None, horizon: int | None = None) -> DqnState:
        T = self.cfg.horizon if horizon is None else horizon
        n = len(self.data)
        if not 1 <= T <= n:
            raise ValueError(f"episode length {T} does not fit {n} slots")
        if start is None:
            start = int(self.rng.integers(0, n - T + 1))
        elif not 0 <= start <= n - T:
            raise ValueError(f"episode start {start} out of range")
        if not self.cfg.persist_queue:
            self.Q = float(self.rng.uniform(0.0, self.cfg.reset_q_max)) if self.cfg.reset_q_max > 0 else 0.0
        self.src = start
        self.theta = 1
        self.slot = start
        self.end = start + T
        self.done = False
        return self.state

    def step(self, x: int) -> tuple[DqnState, float, StepInfo]:
        if self.done:
            raise EpisodeOver("episode finished; call reset()")
        if x not in (0, 1):
            raise ValueError(f"sensing action must be 0 or 1, got {x!r}")
        t = self.slot
        src = t if x == 1 else self.src
        label = int(self.data.labels[t])
        loss = float(-self.logp[src, label])
        cost = dpp_cost(loss, self.Q, x, self.cfg.alpha, self.cfg.V)
        Q_next = queue_update(self.Q, x, self.cfg.alpha)
        theta_next = age_update(self.theta, x)
        info = StepInfo(t, int(x), self.Q, self.theta, loss, cost,
                        int(label_ranks(self.logp[src][None, :], [label])[0]), Q_next, theta_next)
        self.src, self.Q, self.theta = src, Q_next, theta_next
        self.slot += 1
        self.done = self.slot >= self.end
        return self.state, cost, info

    def get_state(self) -> dict:
        return {"Q": self.Q, "theta": self.theta, "src": self.src, "slot": self.slot,
                "end": self.end, "done": self.done, "rng": self.rng.bit_generator.state}

    def set_state(self, st: dict) -> None:
        self.Q = float(st["Q"])
        self.theta = int(st["theta"])
        self.src, self.slot, self.end = int(st["src"]), int(st["slot"]), int(st["end"])
        self.done = bool(st["done"])
        self.rng.bit_generator.state = st["rng"]
