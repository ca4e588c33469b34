"""Experiment orchestration behind the CLI: artifacts on disk, baselines and reports.

Layout of an output directory::

    dataset.csv, gains.csv               generate
    dnn.npz, dnn_loss.csv                train-dnn
    dqn_<tag>.npz, dqn_<tag>_train.csv   train-dqn   (tag = a<alpha>_V<V>[_noage])
    eval_<policy>_<tag>.csv              evaluate (per-slot traces)
    eval_summary.csv, sweep_alpha.csv, queue_trace_<tag>.csv, queue_trace_summary.csv
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .channel import Dataset, generate_dataset, load_dataset_csv, read_gains_csv, write_dataset_csv, write_gains_csv
from .config import ConfigError, ExperimentConfig, dump_config
from .dqn import DqnAgent, DqnConfig, EpochStats, ReplayBuffer, greedy_action, train_dqn
from .env import SensingEnv, StepInfo
from .nn import AdamState, MLPParams, load_params, params_from_arrays, params_to_arrays, save_params
from .predictor import topk_accuracy, train_dnn

log = logging.getLogger(__name__)

POLICIES = ("dqn", "dqn_no_age", "random", "full")
AGENT_FORMAT = "sensebeam-dqn"
AGENT_VERSION = 1


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: list[str], rows: Iterable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def tag(alpha: float, V: float, include_age: bool = True) -> str:
    return f"a{alpha:g}_V{V:g}" + ("" if include_age else "_noage")


def save_run_config(cfg: ExperimentConfig) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "config.ini").write_text(dump_config(cfg), encoding="utf-8")


# ---------------------------------------------------------------- dataset

def build_dataset(cfg: ExperimentConfig) -> Dataset:
    return generate_dataset(cfg.trajectory_config(), cfg.channel_config(), cfg.codebook())


def cmd_generate(cfg: ExperimentConfig) -> tuple[Path, Path]:
    ds = build_dataset(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    save_run_config(cfg)
    data_path, gains_path = cfg.out / "dataset.csv", cfg.out / "gains.csv"
    write_dataset_csv(ds, data_path)
    write_gains_csv(ds, gains_path)
    log.info("wrote %d records to %s", len(ds), data_path)
    return data_path, gains_path


def label_mismatches(data_path, gains_path, M: int) -> int:
    """Rows whose label is not the lowest-index argmax of the sidecar gains."""
    ds = load_dataset_csv(data_path, M)
    gains = read_gains_csv(gains_path)
    if gains.shape != (len(ds), M):
        raise ValueError(f"gains file has shape {gains.shape}, expected {(len(ds), M)}")
    best = [max(range(M), key=lambda m, g=g: (g[m], -m)) for g in gains]
    return int(sum(int(b) != int(y) for b, y in zip(best, ds.labels)))


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    path = cfg.out / "dataset.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `generate` first")
    return load_dataset_csv(path, cfg.channel.beams)


def splits(cfg: ExperimentConfig, ds: Dataset | None = None) -> tuple[Dataset, Dataset]:
    ds = load_dataset(cfg) if ds is None else ds
    return ds.split(cfg.eval.train_fraction)


# ---------------------------------------------------------------- DNN

def cmd_train_dnn(cfg: ExperimentConfig, on_epoch: Callable[[int, MLPParams], None] | None = None) -> tuple[MLPParams, list[float]]:
    train, test = splits(cfg)
    params, history = train_dnn(train, cfg.dnn_config(), on_epoch)
    save_run_config(cfg)
    save_params(params, cfg.out / "dnn.npz")
    write_csv(cfg.out / "dnn_loss.csv", ["epoch", "mean_loss"], enumerate(history))
    log.info("dnn test top-1 %.4f", topk_accuracy(params, test, 1))
    return params, history


def load_dnn(cfg: ExperimentConfig) -> MLPParams:
    path = cfg.out / "dnn.npz"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `train-dnn` first")
    return load_params(path)


# ---------------------------------------------------------------- DQN checkpoints

def save_agent(agent: DqnAgent, env: SensingEnv, history: list[EpochStats], path) -> None:
    meta = {
        "format": AGENT_FORMAT,
        "version": AGENT_VERSION,
        "dqn_config": asdict(agent.cfg),
        "env_config": {**asdict(env.cfg), "alpha": env.cfg.alpha},
        "state_dim": agent.state_dim,
        "step": agent.step,
        "epoch": agent.epoch,
        "epsilon": agent.cfg.epsilon(agent.step),
        "adam_t": agent.adam.t,
        "agent_rng": agent.rng.bit_generator.state,
        "env_state": env.get_state(),
        "history": [asdict(h) for h in history],
    }
    arrays = {
        **params_to_arrays(agent.online, "online_"),
        **params_to_arrays(agent.target, "target_"),
        **params_to_arrays(agent.adam.m, "adam_m_"),
        **params_to_arrays(agent.adam.v, "adam_v_"),
        **agent.buffer.to_arrays(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        np.savez(f, meta=np.array(json.dumps(meta)), **arrays)


def load_agent(path, env: SensingEnv | None = None) -> tuple[DqnAgent, list[EpochStats], dict]:
    """Restore an agent (and optionally the training env state) bit-exactly."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `train-dqn` first")
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != AGENT_FORMAT or meta.get("version") != AGENT_VERSION:
            raise ValueError(f"{path}: not a {AGENT_FORMAT} v{AGENT_VERSION} checkpoint")
        dc = dict(meta["dqn_config"])
        dc["hidden"] = tuple(dc["hidden"])
        agent = DqnAgent(meta["state_dim"], DqnConfig(**dc))
        agent.online = params_from_arrays(z, "online_")
        agent.target = params_from_arrays(z, "target_")
        agent.adam = AdamState(params_from_arrays(z, "adam_m_"), params_from_arrays(z, "adam_v_"), meta["adam_t"])
        agent.buffer = ReplayBuffer.from_arrays(z)
    agent.rng.bit_generator.state = meta["agent_rng"]
    agent.step, agent.epoch = meta["step"], meta["epoch"]
    if env is not None:
        env.set_state(meta["env_state"])
    return agent, [EpochStats(**h) for h in meta["history"]], meta


def agent_path(cfg: ExperimentConfig, alpha: float, V: float, include_age: bool) -> Path:
    return cfg.out / f"dqn_{tag(alpha, V, include_age)}.npz"


def training_env(cfg: ExperimentConfig, dnn: MLPParams, train: Dataset, alpha: float, V: float,
                 include_age: bool) -> SensingEnv:
    horizon = min(cfg.dqn.steps_per_epoch, len(train))
    return SensingEnv(train, dnn, cfg.env_config(alpha, V, include_age, horizon))


def cmd_train_dqn(cfg: ExperimentConfig, alpha: float | None = None, V: float | None = None,
                  include_age: bool | None = None, resume: bool = False) -> tuple[DqnAgent, list[EpochStats]]:
    alpha = cfg.env.alpha if alpha is None else alpha
    V = cfg.env.V if V is None else V
    include_age = cfg.env.include_age if include_age is None else include_age
    dnn = load_dnn(cfg)
    train, _ = splits(cfg)
    env = training_env(cfg, dnn, train, alpha, V, include_age)
    path = agent_path(cfg, alpha, V, include_age)
    agent, history = None, []
    if resume and path.exists():
        agent, history, meta = load_agent(path, env)
        # epochs may be extended on resume; everything else must match
        if dataclasses.replace(agent.cfg, epochs=cfg.dqn.epochs) != cfg.dqn:
            raise ConfigError(f"{path}: DQN settings differ from the current configuration")
        agent.cfg = cfg.dqn
        log.info("resuming %s at epoch %d", path.name, agent.epoch)

    every = cfg.run.checkpoint_every

    def on_epoch(a: DqnAgent, stats: EpochStats) -> None:
        history.append(stats)
        if every and a.epoch % every == 0:
            save_agent(a, env, history, path)

    agent, _ = train_dqn(env, cfg.dqn, agent, on_epoch)
    save_run_config(cfg)
    save_agent(agent, env, history, path)
    write_csv(path.with_name(path.stem + "_train.csv"), ["epoch", "mean_cost", "sense_rate", "mean_Q"],
              ((h.epoch, h.mean_cost, h.sense_rate, h.mean_Q) for h in history))
    return agent, history


def ensure_agent(cfg: ExperimentConfig, alpha: float, V: float, include_age: bool) -> DqnAgent:
    path = agent_path(cfg, alpha, V, include_age)
    if path.exists():
        agent, _, _ = load_agent(path)
        if agent.epoch >= cfg.dqn.epochs:
            return agent
    return cmd_train_dqn(cfg, alpha, V, include_age, resume=True)[0]


# ---------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class EvalReport:
    policy: str
    alpha: float
    V: float
    horizon: int
    top1: float
    top2: float
    top3: float
    sense_rate: float
    final_Q: float
    mean_Q: float
    trace: str = ""

    @property
    def avg_accuracy(self) -> float:
        return (self.top1 + self.top2 + self.top3) / 3.0

    HEADER = ["policy", "alpha", "V", "horizon", "top1", "top2", "top3", "avg_accuracy",
              "sense_rate", "final_Q", "mean_Q", "trace"]

    def row(self) -> list:
        return [self.policy, self.alpha, self.V, self.horizon, self.top1, self.top2, self.top3,
                self.avg_accuracy, self.sense_rate, self.final_Q, self.mean_Q, self.trace]


TRACE_HEADER = ["t", "x", "Q", "theta", "loss", "cost", "top1_hit"]


def rollout(env: SensingEnv, policy: Callable[[SensingEnv], int], horizon: int) -> list[StepInfo]:
    """Run ``horizon`` slots as back-to-back chronological passes over the env's data.

    Each pass starts at the first slot with the free initial sample; the
    virtual queue carries over between passes.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = len(env.data)
    steps: list[StepInfo] = []
    while len(steps) < horizon:
        env.reset(start=0, horizon=min(n, horizon - len(steps)))
        while not env.done:
            steps.append(env.step(policy(env))[2])
    return steps


def summarize(policy: str, alpha: float, V: float, steps: list[StepInfo], trace: str = "") -> EvalReport:
    ranks = np.array([s.rank for s in steps])
    xs = np.array([s.x for s in steps], dtype=float)
    Qs = np.array([s.Q for s in steps])
    n = len(steps)
    return EvalReport(policy, alpha, V, n,
                      float((ranks < 1).sum() / n), float((ranks < 2).sum() / n), float((ranks < 3).sum() / n),
                      float(xs.mean()), float(steps[-1].Q_next), float(Qs.mean()), trace)


def make_policy(kind: str, alpha: float, seed: int, agent: DqnAgent | None = None) -> Callable[[SensingEnv], int]:
    if kind == "full":
        return lambda env: 1
    if kind == "random":
        rng = np.random.default_rng([seed, 4])
        return lambda env: int(rng.random() < alpha)
    if kind in ("dqn", "dqn_no_age"):
        if agent is None:
            raise ValueError(f"policy {kind} needs a trained agent")
        online, objective = agent.online.copy(), agent.cfg.objective
        return lambda env: greedy_action(online, env.encoded(), objective)
    raise ValueError(f"unknown policy {kind!r}; choose from {POLICIES}")


def evaluate_policy(kind: str, cfg: ExperimentConfig, horizon: int | None = None, alpha: float | None = None,
                    V: float | None = None, dnn: MLPParams | None = None, agent: DqnAgent | None = None,
                    test: Dataset | None = None, write_trace: bool = True) -> tuple[EvalReport, list[StepInfo]]:
    """Roll a frozen policy over the held-out chronological tail."""
    alpha = cfg.env.alpha if alpha is None else alpha
    V = cfg.env.V if V is None else V
    horizon = cfg.eval.horizon if horizon is None else horizon
    include_age = kind != "dqn_no_age"
    dnn = load_dnn(cfg) if dnn is None else dnn
    if test is None:
        _, test = splits(cfg)
    if agent is None and kind in ("dqn", "dqn_no_age"):
        agent, _, _ = load_agent(agent_path(cfg, alpha, V, include_age))
    # the budget is a long-run average over the whole evaluation, so the queue always carries over
    env_cfg = dataclasses.replace(cfg.env_config(alpha, V, include_age, horizon=len(test)), persist_queue=True)
    env = SensingEnv(test, dnn, env_cfg)
    steps = rollout(env, make_policy(kind, alpha, cfg.eval_seed(), agent), horizon)
    trace = ""
    if write_trace:
        p = write_csv(cfg.out / f"eval_{kind}_{tag(alpha, V)}.csv", TRACE_HEADER,
                      ((i, s.x, s.Q, s.theta, s.loss, s.cost, s.top1_hit) for i, s in enumerate(steps)))
        trace = p.name
    report = summarize(kind, alpha, V, steps, trace)
    if not all(np.isfinite([report.top1, report.sense_rate, report.final_Q, report.mean_Q])):
        raise FloatingPointError(f"non-finite evaluation result for {kind}")
    return report, steps


def cmd_evaluate(cfg: ExperimentConfig, policies: Iterable[str] = POLICIES) -> list[EvalReport]:
    """Evaluate at ``env.alpha``/``env.V``; missing agents are trained first."""
    dnn = load_dnn(cfg)
    _, test = splits(cfg)
    reports = []
    for p in policies:
        agent = ensure_agent(cfg, cfg.env.alpha, cfg.env.V, p == "dqn") if p.startswith("dqn") else None
        reports.append(evaluate_policy(p, cfg, dnn=dnn, agent=agent, test=test)[0])
    write_csv(cfg.out / "eval_summary.csv", EvalReport.HEADER, (r.row() for r in reports))
    return reports


def cmd_sweep_alpha(cfg: ExperimentConfig, alphas: Iterable[float], policies: Iterable[str] = POLICIES,
                    V: float | None = None) -> list[EvalReport]:
    V = cfg.env.V if V is None else V
    dnn = load_dnn(cfg)
    _, test = splits(cfg)
    reports = []
    for a in alphas:
        for p in policies:
            agent = None
            if p in ("dqn", "dqn_no_age"):
                agent = ensure_agent(cfg, a, V, p == "dqn")
            reports.append(evaluate_policy(p, cfg, alpha=a, V=V, dnn=dnn, agent=agent, test=test,
                                           write_trace=False)[0])
    write_csv(cfg.out / "sweep_alpha.csv", ["alpha", "policy", "avg_accuracy", "sense_rate"],
              ((r.alpha, r.policy, r.avg_accuracy, r.sense_rate) for r in reports))
    return reports


def convergence_slot(running_rate: np.ndarray, alpha: float, tol: float = 0.02) -> int:
    """First slot after which the running sensing rate stays within ``tol`` of ``alpha``."""
    outside = np.flatnonzero(np.abs(running_rate - alpha) > tol)
    return 0 if outside.size == 0 else int(outside[-1] + 1)


def cmd_queue_trace(cfg: ExperimentConfig, Vs: Iterable[float], alphas: Iterable[float]) -> list[dict]:
    dnn = load_dnn(cfg)
    _, test = splits(cfg)
    summary = []
    for V in Vs:
        for a in alphas:
            agent = ensure_agent(cfg, a, V, True)
            _, steps = evaluate_policy("dqn", cfg, alpha=a, V=V, dnn=dnn, agent=agent, test=test, write_trace=False)
            xs = np.array([s.x for s in steps], dtype=float)
            running = np.cumsum(xs) / np.arange(1, len(xs) + 1)
            write_csv(cfg.out / f"queue_trace_{tag(a, V)}.csv", ["t", "running_sense_rate", "Q"],
                      ((i, r, s.Q) for i, (r, s) in enumerate(zip(running, steps))))
            summary.append({"alpha": a, "V": V, "final_sense_rate": float(running[-1]),
                            "converged_at": convergence_slot(running, a),
                            "max_Q": float(max(s.Q for s in steps))})
    write_csv(cfg.out / "queue_trace_summary.csv", ["alpha", "V", "final_sense_rate", "converged_at", "max_Q"],
              ([s["alpha"], s["V"], s["final_sense_rate"], s["converged_at"], s["max_Q"]] for s in summary))
    return summary
