"""Beam-prediction classifier: supervised training, inference and Top-k scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import Dataset
from .nn import AdamState, MLPParams, adam_step, backward, forward, log_softmax, mlp_init, softmax

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DnnConfig:
    num_beams: int = 16
    hidden: tuple[int, ...] = (1024, 1024)
    lr: float = 0.01
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.num_beams < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("num_beams, batch_size and epochs must be positive")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def train_dnn(dataset, cfg: DnnConfig,
              on_epoch: Callable[[int, MLPParams], None] | None = None) -> tuple[MLPParams, list[float]]:
    """Mini-batch Adam on the mean cross-entropy; returns params and per-epoch mean loss.

    ``on_epoch(epoch, params)`` runs after every epoch with the live parameters.
    """
    ds = Dataset.from_records(dataset)
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    if np.any(ds.labels < 0) or np.any(ds.labels >= cfg.num_beams):
        raise ValueError(f"labels must lie in [0, {cfg.num_beams})")
    params = mlp_init([ds.feature_dim, *cfg.hidden, cfg.num_beams], cfg.seed)
    adam = AdamState.for_params(params)
    rng = np.random.default_rng([cfg.seed, 1])
    X, y = ds.features, ds.labels
    n = len(ds)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            grads, loss = backward(params, X[idx], y[idx])
            adam_step(params, grads, adam, cfg.lr)
            total += loss * len(idx)
        history.append(total / n)
        if not np.isfinite(history[-1]):
            raise FloatingPointError(f"training loss became non-finite at epoch {epoch}")
        log.debug("dnn epoch %d loss %.5f", epoch, history[-1])
        if on_epoch is not None:
            on_epoch(epoch, params)
    return params, history


def predict_beam(params: MLPParams, features) -> tuple[np.ndarray, int]:
    p = softmax(forward(params, features))
    if p.ndim != 1:
        raise ValueError("predict_beam takes a single feature vector")
    return p, int(np.argmax(p))


def log_probabilities(params: MLPParams, features: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """(n, M) log-softmax outputs for a feature matrix, evaluated in chunks."""
    features = np.asarray(features, dtype=float)
    parts = [log_softmax(forward(params, features[i:i + chunk])) for i in range(0, len(features), chunk)]
    return np.concatenate(parts) if parts else np.zeros((0, params.d_out))


def label_ranks(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """0-based rank of each label among its row's scores, ties resolved towards lower index."""
    scores = np.atleast_2d(scores)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    rows = np.arange(len(labels))
    s_lab = scores[rows, labels][:, None]
    idx = np.arange(scores.shape[1])[None, :]
    higher = scores > s_lab
    tied_before = (scores == s_lab) & (idx < labels[:, None])
    return (higher | tied_before).sum(axis=1)


def topk_hits(scores: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    M = np.atleast_2d(scores).shape[1]
    if not 1 <= k <= M:
        raise ValueError(f"k must lie in [1, {M}], got {k}")
    return label_ranks(scores, labels) < k


def topk_accuracy(params: MLPParams, dataset, k: int) -> float:
    ds = Dataset.from_records(dataset)
    if len(ds) == 0:
        raise ValueError("cannot score an empty dataset")
    if not 1 <= k <= params.d_out:
        raise ValueError(f"k must lie in [1, {params.d_out}], got {k}")
    hits = topk_hits(log_probabilities(params, ds.features), ds.labels, k)
    return float(hits.sum() / len(hits))
