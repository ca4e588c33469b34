"""Deep Q-network for the binary sense/skip decision.

The network predicts discounted *cost*, so the greedy action is the argmin of
its two outputs and the TD backup uses a min. ``objective="reward"`` runs the
mirrored formulation (reward ``-C``, argmax, max backup) for comparison.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .env import SensingEnv
from .nn import AdamState, MLPParams, adam_step, backward_regression, forward, mlp_init

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DqnConfig:
    hidden: tuple[int, ...] = (128, 128)
    gamma: float = 0.99999
    lr: float = 0.001
    batch_size: int = 64
    replay_capacity: int = 50_000
    epochs: int = 300
    steps_per_epoch: int = 400
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    target_sync: int = 1000  # 0 bootstraps from the online net
    terminal_at_horizon: bool = False
    loss: str = "squared"  # or "huber"
    objective: str = "cost"  # or "reward"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if min(self.batch_size, self.replay_capacity, self.epochs, self.steps_per_epoch) < 1:
            raise ValueError("batch size, replay capacity, epochs and steps must be positive")
        if not (0 <= self.eps_end <= 1 and 0 <= self.eps_start <= 1):
            raise ValueError("epsilon values must lie in [0, 1]")
        if not 0 <= self.eps_decay_fraction <= 1:
            raise ValueError("eps_decay_fraction must lie in [0, 1]")
        if self.target_sync < 0:
            raise ValueError("target_sync must be >= 0")
        if self.loss not in ("squared", "huber"):
            raise ValueError(f"unknown TD loss {self.loss!r}")
        if self.objective not in ("cost", "reward"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    def epsilon(self, step: int) -> float:
        """Linear anneal from eps_start to eps_end over the first eps_decay_fraction of training."""
        span = self.eps_decay_fraction * self.total_steps
        if span <= 0 or step >= span:
            return self.eps_end
        return self.eps_start + (self.eps_end - self.eps_start) * step / span


@dataclass
class Batch:
    S: np.ndarray
    x: np.ndarray
    C: np.ndarray
    S2: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return len(self.x)


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions stored column-wise."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.S = np.zeros((capacity, state_dim))
        self.x = np.zeros(capacity, dtype=np.int64)
        self.C = np.zeros(capacity)
        self.S2 = np.zeros((capacity, state_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def push(self, S, x: int, C: float, S2, terminal: bool = False) -> None:
        if x not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {x!r}")
        if not np.isfinite(C):
            raise ValueError("transition cost must be finite")
        i = self.cursor
        self.S[i], self.x[i], self.C[i], self.S2[i], self.terminal[i] = S, x, C, S2, terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _ordered(self) -> np.ndarray:
        """Storage indices oldest first."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def contents(self) -> Batch:
        return self.take(self._ordered())

    def take(self, idx) -> Batch:
        return Batch(self.S[idx], self.x[idx], self.C[idx], self.S2[idx], self.terminal[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, cannot sample {batch_size}")
        return self.take(rng.integers(0, self.size, size=batch_size))

    def to_arrays(self, prefix: str = "replay_") -> dict[str, np.ndarray]:
        b = self.contents()
        return {f"{prefix}S": b.S, f"{prefix}x": b.x, f"{prefix}C": b.C,
                f"{prefix}S2": b.S2, f"{prefix}terminal": b.terminal,
                f"{prefix}meta": np.array([self.capacity, self.size, self.cursor])}

    @classmethod
    def from_arrays(cls, arrs, prefix: str = "replay_") -> "ReplayBuffer":
        capacity, size, cursor = (int(v) for v in arrs[f"{prefix}meta"])
        S = arrs[f"{prefix}S"]
        buf = cls(capacity, S.shape[1] if S.ndim == 2 else 0)
        # restore the exact physical layout so index sampling replays identically
        order = (np.arange(size) + (cursor if size == capacity else 0)) % capacity
        buf.S[order], buf.x[order], buf.C[order] = S, arrs[f"{prefix}x"], arrs[f"{prefix}C"]
        buf.S2[order], buf.terminal[order] = arrs[f"{prefix}S2"], arrs[f"{prefix}terminal"]
        buf.size, buf.cursor = size, cursor
        return buf


def push_transition(buffer: ReplayBuffer, transition) -> ReplayBuffer:
    buffer.push(*transition)
    return buffer


def qnet_init(state_dim: int, cfg: DqnConfig) -> tuple[MLPParams, MLPParams]:
    if state_dim < 1:
        raise ValueError("state_dim must be >= 1")
    online = mlp_init([state_dim, *cfg.hidden, 2], cfg.seed)
    return online, online.copy()


def _best(q: np.ndarray, objective: str) -> np.ndarray:
    # argmin/argmax both return the first index on ties, i.e. action 0
    return np.argmin(q, axis=-1) if objective == "cost" else np.argmax(q, axis=-1)


def greedy_action(qnet: MLPParams, s, objective: str = "cost") -> int:
    return int(_best(forward(qnet, s), objective))


def epsilon_greedy(qnet: MLPParams, s, eps: float, rng: np.random.Generator, objective: str = "cost") -> int:
    if not 0 <= eps <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < eps:
        return int(rng.integers(0, 2))
    return greedy_action(qnet, s, objective)


def td_targets(target: MLPParams, batch: Batch, gamma: float, objective: str = "cost") -> np.ndarray:
    q_next = forward(target, batch.S2)
    if objective == "cost":
        return batch.C + gamma * q_next.min(axis=1) * ~batch.terminal
    return -batch.C + gamma * q_next.max(axis=1) * ~batch.terminal


def q_update(online: MLPParams, target: MLPParams, batch: Batch, gamma: float, lr: float,
             adam: AdamState, objective: str = "cost", loss: str = "squared") -> tuple[MLPParams, float]:
    """One Adam step on the mean TD loss; only the taken action's output receives gradient."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    y = td_targets(target, batch, gamma, objective)
    if loss == "huber":
        q = forward(online, batch.S)[np.arange(len(batch)), batch.x]
        y = q - np.clip(q - y, -1.0, 1.0)
    grads, td_loss = backward_regression(online, batch.S, y, batch.x)
    adam_step(online, grads, adam, lr)
    return online, td_loss


def target_sync(online: MLPParams, target: MLPParams, step: int, interval: int) -> MLPParams:
    if interval >= 1 and step % interval == 0:
        return online.copy()
    return target


class DqnAgent:
    def __init__(self, state_dim: int, cfg: DqnConfig):
        self.cfg = cfg
        self.state_dim = state_dim
        self.online, self.target = qnet_init(state_dim, cfg)
        self.adam = AdamState.for_params(self.online)
        self.buffer = ReplayBuffer(cfg.replay_capacity, state_dim)
        self.rng = np.random.default_rng([cfg.seed, 3])
        self.step = 0
        self.epoch = 0

    def act(self, s, eps: float) -> int:
        return epsilon_greedy(self.online, s, eps, self.rng, self.cfg.objective)

    def greedy(self, s) -> int:
        return greedy_action(self.online, s, self.cfg.objective)

    def q_values(self, s) -> np.ndarray:
        return forward(self.online, s)

    def learn(self) -> float | None:
        if len(self.buffer) < self.cfg.batch_size:
            return None
        batch = self.buffer.sample(self.cfg.batch_size, self.rng)
        boot = self.target if self.cfg.target_sync else self.online
        _, td = q_update(self.online, boot, batch, self.cfg.gamma, self.cfg.lr, self.adam,
                         self.cfg.objective, self.cfg.loss)
        return td


def greedy_policy(agent: DqnAgent) -> Callable[[np.ndarray], int]:
    online = agent.online.copy()
    objective = agent.cfg.objective
    return lambda s: greedy_action(online, s, objective)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_cost: float
    sense_rate: float
    mean_Q: float
    epsilon: float


def train_dqn(env: SensingEnv, cfg: DqnConfig, agent: DqnAgent | None = None,
              on_epoch: Callable[[DqnAgent, EpochStats], None] | None = None) -> tuple[DqnAgent, list[EpochStats]]:
    """Act, store, sample, update, repeat: ``cfg.epochs`` epochs of ``cfg.steps_per_epoch`` steps.

    Each epoch starts a fresh episode (``env.reset()``); an episode shorter
    than an epoch is restarted as soon as it ends.

    Passing a restored ``agent`` (and an env restored to the matching state)
    continues an interrupted run from ``agent.epoch``.
    """
    if agent is None:
        agent = DqnAgent(env.state_dim, cfg)
    elif agent.state_dim != env.state_dim:
        raise ValueError("agent and environment disagree on the state size")
    history: list[EpochStats] = []
    while agent.epoch < cfg.epochs:
        env.reset()
        s = env.encoded()
        costs = np.empty(cfg.steps_per_epoch)
        xs = np.empty(cfg.steps_per_epoch)
        qs = np.empty(cfg.steps_per_epoch)
        eps = cfg.epsilon(agent.step)
        for i in range(cfg.steps_per_epoch):
            if env.done:
                env.reset()
                s = env.encoded()
            eps = cfg.epsilon(agent.step)
            x = agent.act(s, eps)
            _, cost, info = env.step(x)
            s2 = env.encoded()
            agent.buffer.push(s, x, cost, s2, env.done and cfg.terminal_at_horizon)
            agent.learn()
            agent.step += 1
            agent.target = target_sync(agent.online, agent.target, agent.step, cfg.target_sync)
            costs[i], xs[i], qs[i] = cost, x, info.Q
            s = s2
        if not agent.online.check_finite():
            raise FloatingPointError(f"Q-network diverged in epoch {agent.epoch}")
        stats = EpochStats(agent.epoch, float(costs.mean()), float(xs.mean()), float(qs.mean()), eps)
        history.append(stats)
        agent.epoch += 1
        log.debug("dqn %s", stats)
        if on_epoch is not None:
            on_epoch(agent, stats)
    return agent, history
