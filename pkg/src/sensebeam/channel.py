"""Beam codebook, line-of-sight ULA channel and the synthetic position/beam dataset.

The transmitter is a half-wavelength uniform linear array lying on the x axis
at ``bs_position`` with broadside along +y. A user at azimuth ``phi`` (measured
from broadside) sees the channel ``sqrt(g) * a(phi)`` where ``a`` is the unit
norm steering vector and ``g`` the distance-dependent path gain.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class DatasetParseError(ValueError):
    """A CSV dataset row could not be turned into a record."""


@dataclass(frozen=True)
class BeamCodebook:
    vectors: np.ndarray  # (M, N) complex, one beam per row

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.complex128)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"codebook must be a non-empty (M, N) array, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def M(self) -> int:
        return self.vectors.shape[0]

    @property
    def N(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.M

    def __getitem__(self, m: int) -> np.ndarray:
        return self.vectors[m]


@dataclass(frozen=True)
class ChannelConfig:
    bs_position: tuple[float, float] = (0.0, 0.0)
    path_gain_ref: float = 1.0
    path_loss_exponent: float = 2.0
    transmit_power: float = 1.0
    noise_variance: float = 1.0

    def __post_init__(self):
        vals = [*self.bs_position, self.path_gain_ref, self.path_loss_exponent,
                self.transmit_power, self.noise_variance]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("channel config fields must be finite")
        if self.path_gain_ref < 0 or self.path_loss_exponent < 0:
            raise ValueError("path gain and path loss exponent must be non-negative")
        if self.transmit_power <= 0 or self.noise_variance <= 0:
            raise ValueError("transmit power and noise variance must be positive")

    def snr(self, gain: float) -> float:
        """Linear SNR ``P |h^H w|^2 / sigma^2`` for a beamforming gain."""
        return self.transmit_power * gain / self.noise_variance


@dataclass(frozen=True)
class TrajectoryConfig:
    """Straight-line user motion, optionally swept back and forth.

    ``passes`` is the number of one-way traversals between ``start`` and
    ``end`` spread over ``num_slots`` (1 = a single start->end drive).
    """

    start: tuple[float, float] = (-30.0, 6.0)
    end: tuple[float, float] = (30.0, 6.0)
    num_slots: int = 5000
    jitter_std: float = 0.0
    passes: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.num_slots < 1:
            raise ValueError("num_slots must be >= 1")
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be >= 0")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")


@dataclass(frozen=True)
class DatasetRecord:
    t: int
    features: np.ndarray
    label: int
    gains: np.ndarray | None = None


@dataclass(frozen=True)
class Dataset(Sequence[DatasetRecord]):
    """Column-oriented record store; indexing yields :class:`DatasetRecord`."""

    slots: np.ndarray  # (T,) int
    features: np.ndarray  # (T, d) float
    labels: np.ndarray  # (T,) int
    gains: np.ndarray | None = None  # (T, M) float
    num_beams: int | None = field(default=None, compare=False)

    def __post_init__(self):
        n = len(self.slots)
        if self.features.ndim != 2 or self.features.shape[0] != n or len(self.labels) != n:
            raise ValueError("slots, features and labels must agree in length")
        if self.gains is not None and self.gains.shape[0] != n:
            raise ValueError("gains must have one row per record")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        for a in (self.slots, self.features, self.labels, self.gains):
            if a is not None:
                a.setflags(write=False)

    def __len__(self) -> int:
        return len(self.slots)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.slots[i], self.features[i], self.labels[i],
                           None if self.gains is None else self.gains[i], self.num_beams)
        return DatasetRecord(
            int(self.slots[i]),
            self.features[i],
            int(self.labels[i]),
            None if self.gains is None else self.gains[i],
        )

    def __iter__(self) -> Iterator[DatasetRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_records(cls, records: Sequence[DatasetRecord], num_beams: int | None = None) -> "Dataset":
        if isinstance(records, Dataset):
            return records
        if not records:
            raise ValueError("cannot build a dataset from zero records")
        gains = None
        if all(r.gains is not None for r in records):
            gains = np.array([r.gains for r in records], dtype=float)
        return cls(
            np.array([r.t for r in records], dtype=np.int64),
            np.array([r.features for r in records], dtype=float),
            np.array([r.label for r in records], dtype=np.int64),
            gains,
            num_beams,
        )

    def split(self, train_fraction: float = 0.8) -> tuple["Dataset", "Dataset"]:
        """Chronological split: head for training, tail held out."""
        cut = int(round(train_fraction * len(self)))
        return self[:cut], self[cut:]


def steering_vector(angle: float, N: int) -> np.ndarray:
    if N < 1:
        raise ValueError(f"antenna count must be >= 1, got {N}")
    n = np.arange(N)
    return np.exp(1j * np.pi * n * np.sin(angle)) / np.sqrt(N)


def dft_beam_angles(M: int) -> np.ndarray:
    m = np.arange(M)
    return np.arcsin(2.0 * m / M - 1.0 + 1.0 / M)


def make_dft_codebook(N: int, M: int) -> BeamCodebook:
    if N < 1 or M < 1:
        raise ValueError(f"need N >= 1 and M >= 1, got N={N}, M={M}")
    return BeamCodebook(np.stack([steering_vector(a, N) for a in dft_beam_angles(M)]))


def los_channel(ue_position, cfg: ChannelConfig, N: int) -> np.ndarray:
    dx = float(ue_position[0]) - cfg.bs_position[0]
    dy = float(ue_position[1]) - cfg.bs_position[1]
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        raise ValueError("user and base station positions coincide")
    phi = math.asin(max(-1.0, min(1.0, dx / dist)))
    g = cfg.path_gain_ref / dist**cfg.path_loss_exponent
    return math.sqrt(g) * steering_vector(phi, N)


def beamforming_gain(h: np.ndarray, w: np.ndarray) -> float:
    h = np.asarray(h)
    w = np.asarray(w)
    if h.shape != w.shape:
        raise ValueError(f"channel length {h.shape} does not match beam length {w.shape}")
    return float(abs(np.vdot(h, w)) ** 2)


def codebook_gains(h: np.ndarray, cb: BeamCodebook) -> np.ndarray:
    """``|h^H w_m|^2`` for every beam."""
    h = np.asarray(h)
    if h.shape != (cb.N,):
        raise ValueError(f"channel length {h.shape} does not match codebook N={cb.N}")
    return np.abs(cb.vectors @ h.conj()) ** 2


def optimal_beam(h: np.ndarray, cb: BeamCodebook) -> int:
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return int(np.argmax(codebook_gains(h, cb)))


def trajectory_positions(traj: TrajectoryConfig) -> np.ndarray:
    """(T, 2) user positions: ping-pong interpolation plus seeded Gaussian jitter."""
    T = traj.num_slots
    u = np.zeros(T) if T == 1 else np.arange(T) * (traj.passes / (T - 1))
    lap = np.floor(u)
    frac = u - lap
    s = np.where(lap % 2 == 0, frac, 1.0 - frac)
    start = np.asarray(traj.start, dtype=float)
    end = np.asarray(traj.end, dtype=float)
    pos = start + s[:, None] * (end - start)
    rng = np.random.default_rng(traj.seed)
    return pos + rng.normal(0.0, 1.0, size=pos.shape) * traj.jitter_std


def normalize_positions(pos: np.ndarray) -> np.ndarray:
    lo = pos.min(axis=0)
    span = pos.max(axis=0) - lo
    out = np.zeros_like(pos)
    ok = span > 0
    out[:, ok] = (pos[:, ok] - lo[ok]) / span[ok]
    return out


def generate_dataset(traj: TrajectoryConfig, cfg: ChannelConfig, cb: BeamCodebook) -> Dataset:
    pos = trajectory_positions(traj)
    gains = np.empty((traj.num_slots, cb.M))
    for t, p in enumerate(pos):
        gains[t] = codebook_gains(los_channel(p, cfg, cb.N), cb)
    labels = np.argmax(gains, axis=1).astype(np.int64)
    return Dataset(np.arange(traj.num_slots, dtype=np.int64), normalize_positions(pos),
                   labels, gains, cb.M)


def dataset_header(d: int) -> list[str]:
    return ["t", *(f"feat_{i}" for i in range(d)), "label"]


def write_dataset_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(dataset_header(ds.feature_dim))
        for t, x, y in zip(ds.slots, ds.features, ds.labels):
            w.writerow([int(t), *(repr(float(v)) for v in x), int(y)])


def write_gains_csv(ds: Dataset, path) -> None:
    if ds.gains is None:
        raise ValueError("dataset carries no gains")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", *(f"gain_{m}" for m in range(ds.gains.shape[1]))])
        for t, g in zip(ds.slots, ds.gains):
            w.writerow([int(t), *(repr(float(v)) for v in g)])


def read_gains_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float).reshape(len(rows) - 1, -1)


def load_dataset_csv(path, M: int) -> Dataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError(f"{path}: missing header row") from None
        header = [h.strip() for h in header]
        d = len(header) - 2
        if d < 0 or header != dataset_header(d):
            raise DatasetParseError(f"{path}: header must be t,feat_0,...,feat_(d-1),label; got {header}")
        slots, feats, labels = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DatasetParseError(f"{path}: row {row_no} has {len(row)} fields, expected {d + 2}")
            try:
                t = int(row[0])
                x = [float(v) for v in row[1:-1]]
                y = int(row[-1])
            except ValueError as e:
                raise DatasetParseError(f"{path}: row {row_no}: {e}") from None
            if not all(math.isfinite(v) for v in x):
                raise DatasetParseError(f"{path}: row {row_no}: non-finite feature")
            if not 0 <= y < M:
                raise DatasetParseError(f"{path}: row {row_no}: label {y} outside [0, {M})")
            slots.append(t)
            feats.append(x)
            labels.append(y)
    return Dataset(np.array(slots, dtype=np.int64),
                   np.array(feats, dtype=float).reshape(len(slots), d),
                   np.array(labels, dtype=np.int64), None, M)
