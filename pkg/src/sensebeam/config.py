"""Experiment configuration: one INI document, one section per sub-config.

Every key can be overridden from the command line by its dotted name, e.g.
``--dqn.epochs 50`` or ``--env.alpha 0.3``. Seeds left unset in a section
inherit ``run.seed``.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from .channel import BeamCodebook, ChannelConfig, TrajectoryConfig, make_dft_codebook
from .dqn import DqnConfig
from .env import EnvConfig
from .lyapunov import SensingBudget
from .predictor import DnnConfig


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ChannelSection:
    antennas: int = 32
    beams: int = 16
    bs_x: float = 0.0
    bs_y: float = 0.0
    path_gain_ref: float = 1.0
    path_loss_exponent: float = 2.0
    transmit_power: float = 1.0
    noise_variance: float = 1.0


@dataclass(frozen=True)
class TrajectorySection:
    start_x: float = -6.0
    start_y: float = 10.0
    end_x: float = 6.0
    end_y: float = 10.0
    num_slots: int = 5000
    jitter_std: float = 0.0
    passes: int = 30
    seed: int | None = None


@dataclass(frozen=True)
class DnnSection:
    hidden: tuple[int, ...] = (1024, 1024)
    lr: float = 0.01
    batch_size: int = 32
    epochs: int = 100
    seed: int | None = None


@dataclass(frozen=True)
class EnvSection:
    alpha: float = 0.5
    c: float = 1.0
    V: float = 100.0
    include_age: bool = True
    q_norm: float = 10.0
    age_norm: float = 20.0
    persist_queue: bool = False
    reset_q_max: float = 300.0  # training episodes start from Q ~ U(0, reset_q_max)
    seed: int | None = None


@dataclass(frozen=True)
class EvalSection:
    horizon: int = 10_000
    train_fraction: float = 0.8
    seed: int | None = None


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out: str = "runs/default"
    checkpoint_every: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    channel: ChannelSection = field(default_factory=ChannelSection)
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    dnn: DnnSection = field(default_factory=DnnSection)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    env: EnvSection = field(default_factory=EnvSection)
    eval: EvalSection = field(default_factory=EvalSection)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self):
        try:
            self.channel_config()
            self.trajectory_config()
            self.dnn_config()
            self.env_config()
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if not 0 <= self.env.alpha <= 1:
            raise ConfigError(f"env.alpha must lie in [0, 1], got {self.env.alpha}")
        if self.eval.horizon < 1:
            raise ConfigError("eval.horizon must be >= 1")
        if not 0 < self.eval.train_fraction < 1:
            raise ConfigError("eval.train_fraction must lie in (0, 1)")

    @property
    def out(self) -> Path:
        return Path(self.run.out)

    def _seed(self, s: int | None) -> int:
        return self.run.seed if s is None else s

    def channel_config(self) -> ChannelConfig:
        c = self.channel
        return ChannelConfig((c.bs_x, c.bs_y), c.path_gain_ref, c.path_loss_exponent,
                             c.transmit_power, c.noise_variance)

    def codebook(self) -> BeamCodebook:
        return make_dft_codebook(self.channel.antennas, self.channel.beams)

    def trajectory_config(self) -> TrajectoryConfig:
        t = self.trajectory
        return TrajectoryConfig((t.start_x, t.start_y), (t.end_x, t.end_y), t.num_slots,
                                t.jitter_std, t.passes, self._seed(t.seed))

    def dnn_config(self) -> DnnConfig:
        d = self.dnn
        return DnnConfig(self.channel.beams, tuple(d.hidden), d.lr, d.batch_size, d.epochs, self._seed(d.seed))

    def dqn_config(self) -> DqnConfig:
        return self.dqn

    def env_config(self, alpha: float | None = None, V: float | None = None,
                   include_age: bool | None = None, horizon: int | None = None) -> EnvConfig:
        e = self.env
        return EnvConfig(
            budget=SensingBudget.from_alpha(e.alpha if alpha is None else alpha, e.c),
            V=e.V if V is None else V,
            horizon=self.dqn.steps_per_epoch if horizon is None else horizon,
            include_age=e.include_age if include_age is None else include_age,
            q_norm=e.q_norm,
            age_norm=e.age_norm,
            persist_queue=e.persist_queue,
            reset_q_max=e.reset_q_max,
            seed=self._seed(e.seed),
        )

    def eval_seed(self) -> int:
        return self._seed(self.eval.seed)

    def replace(self, **overrides: str) -> "ExperimentConfig":
        """Copy with dotted-name string overrides applied (``{"dqn.epochs": "50"}``)."""
        return from_mapping(to_mapping(self, include_unset=False), overrides)


def _parse_value(raw: str, default, name: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            b = configparser.ConfigParser.BOOLEAN_STATES.get(raw.lower())
            if b is None:
                raise ValueError(f"not a boolean: {raw!r}")
            return b
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
        if isinstance(default, int) or default is None:
            return None if raw.lower() in ("", "none") else int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"{name}: {e}") from None


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(i) for i in v)
    if isinstance(v, float):
        return repr(v)
    return "none" if v is None else str(v)


def from_mapping(values: dict[str, dict[str, str]], overrides: dict[str, str] | None = None) -> ExperimentConfig:
    values = {s: dict(kv) for s, kv in values.items()}
    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must be section.key")
        sec, key = dotted.split(".", 1)
        values.setdefault(sec, {})[key] = raw
    sections = {}
    for f in fields(ExperimentConfig):
        sec_values = values.pop(f.name, {})
        default = f.default_factory()  # type: ignore[misc]
        kwargs = {}
        known = {sf.name: getattr(default, sf.name) for sf in fields(default)}
        for key, raw in sec_values.items():
            if key not in known:
                raise ConfigError(f"unknown key {f.name}.{key}")
            kwargs[key] = _parse_value(str(raw), known[key], f"{f.name}.{key}")
        try:
            sections[f.name] = dataclasses.replace(default, **kwargs)
        except ValueError as e:
            raise ConfigError(f"[{f.name}] {e}") from None
    if values:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(values))}")
    return ExperimentConfig(**sections)


def to_mapping(cfg: ExperimentConfig, include_unset: bool = True) -> dict[str, dict[str, str]]:
    out = {}
    for f in fields(cfg):
        sec = getattr(cfg, f.name)
        out[f.name] = {sf.name: _format_value(getattr(sec, sf.name)) for sf in fields(sec)
                       if include_unset or getattr(sec, sf.name) is not None}
    return out


def load_config(path=None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    values: dict[str, dict[str, str]] = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keep key case (V)
        text = Path(path).read_text(encoding="utf-8")
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as e:
            raise ConfigError(str(e)) from None
        values = {s: dict(parser[s]) for s in parser.sections()}
    return from_mapping(values, overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_dict(to_mapping(cfg))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
