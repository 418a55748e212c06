"""Experiment configuration: ``section.key = value`` lines with ``#`` comments."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .oracle import GmmSpec
from .schedules import (ConfigurationError, NoiseSchedule, ShiftMode, adm_linear_betas,
                        build_noise_schedule)
from .shift_predictor import PredictorKind

SEED_ENV = "SHIFTDIFF_SEED"


@dataclass
class ScheduleSection:
    T: int = 200
    beta_start: str = "auto"
    beta_end: str = "auto"


@dataclass
class ShiftSection:
    mode: str = "quadratic_shift"
    predictor: str = "auto"
    predictor_init: float = 0.0
    sigma_diag: str = "1"


@dataclass
class ModelSection:
    hidden: int = 128
    depth: int = 2
    time_dim: int = 64
    conditional: str = "auto"


@dataclass
class TrainSection:
    steps: int = 20000
    batch: int = 256
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    ema: float = 0.999
    seed: int = 0
    checkpoint_every: int = 0


@dataclass
class DataSection:
    generator: str = "gmm"
    means: str = "2,2;-2,-2"
    variance: float = 0.1
    per_class: int = 5000
    mnist_images: str = ""
    mnist_labels: str = ""


@dataclass
class OutputSection:
    checkpoint: str = ""
    metrics: str = ""
    wall_clock: bool = True


SECTIONS = {
    "schedule": ScheduleSection,
    "shift": ShiftSection,
    "model": ModelSection,
    "train": TrainSection,
    "data": DataSection,
    "output": OutputSection,
}


@dataclass
class Config:
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    shift: ShiftSection = field(default_factory=ShiftSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)
    output: OutputSection = field(default_factory=OutputSection)

    # derived views -------------------------------------------------------

    @property
    def shift_mode(self) -> ShiftMode:
        return ShiftMode.parse(self.shift.mode)

    @property
    def predictor_kind(self) -> PredictorKind:
        # auto: Data-Normalization subtracts the class mean, other modes learn E
        if self.shift.predictor.strip().lower() == "auto":
            if self.shift_mode is ShiftMode.DATA_NORMALIZATION:
                return PredictorKind.CLASS_MEAN
            return PredictorKind.TRAINABLE
        return PredictorKind.parse(self.shift.predictor)

    @property
    def conditional_net(self) -> bool:
        flag = self.model.conditional.strip().lower()
        if flag == "auto":
            return self.shift_mode is ShiftMode.DATA_NORMALIZATION
        return _parse_bool(flag, "model.conditional")

    def betas(self) -> tuple[float, float]:
        auto_start, auto_end = adm_linear_betas(self.schedule.T)
        start = auto_start if self.schedule.beta_start == "auto" else float(self.schedule.beta_start)
        end = auto_end if self.schedule.beta_end == "auto" else float(self.schedule.beta_end)
        return start, end

    def noise_schedule(self) -> NoiseSchedule:
        return build_noise_schedule(self.schedule.T, *self.betas())

    def sigma_diag(self, dim: int) -> np.ndarray | None:
        values = [float(v) for v in self.shift.sigma_diag.split(",")]
        if len(values) == 1:
            if values[0] == 1.0:
                return None
            return np.full(dim, values[0])
        if len(values) != dim:
            raise ConfigurationError(f"shift.sigma_diag: expected 1 or {dim} values, got {len(values)}")
        return np.asarray(values)

    def gmm(self) -> GmmSpec:
        try:
            means = [[float(v) for v in row.split(",")] for row in self.data.means.split(";")]
        except ValueError:
            raise ConfigurationError(f"data.means: cannot parse {self.data.means!r}") from None
        return GmmSpec.isotropic(means, self.data.variance)

    def validate(self) -> "Config":
        mode = self.shift_mode
        self.predictor_kind
        if self.train.steps < 0:
            raise ConfigurationError("train.steps: must be non-negative")
        if self.train.batch < 1:
            raise ConfigurationError("train.batch: must be positive")
        if not 0.0 <= self.train.ema < 1.0:
            raise ConfigurationError("train.ema: must lie in [0, 1)")
        if mode is ShiftMode.DATA_NORMALIZATION and not self.conditional_net:
            raise ConfigurationError("model.conditional: data_normalization requires a conditional network")
        if self.data.generator not in ("gmm", "mnist"):
            raise ConfigurationError(f"data.generator: unknown generator {self.data.generator!r}")
        self.noise_schedule()
        return self

    def with_overrides(self, **dotted) -> "Config":
        """Copy with ``section__key=value`` overrides (values given as strings or typed)."""
        cfg = dataclasses.replace(self, **{n: dataclasses.replace(getattr(self, n)) for n in SECTIONS})
        for name, value in dotted.items():
            section, key = name.split("__", 1)
            _assign(cfg, section, key, value if isinstance(value, str) else _format(value))
        return cfg


def _parse_bool(text: str, where: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{where}: expected a boolean, got {text!r}")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _assign(cfg: Config, section: str, key: str, raw: str) -> None:
    if section not in SECTIONS:
        raise ConfigurationError(f"{section}.{key}: unknown section {section!r}")
    sect = getattr(cfg, section)
    fields = {f.name: f for f in dataclasses.fields(sect)}
    if key not in fields:
        raise ConfigurationError(f"{section}.{key}: unknown key")
    kind = type(fields[key].default)
    where = f"{section}.{key}"
    try:
        if kind is bool:
            value = _parse_bool(raw, where)
        elif kind is int:
            value = int(raw)
        elif kind is float:
            value = float(raw)
        else:
            value = raw
    except ValueError:
        raise ConfigurationError(f"{where}: cannot parse {raw!r} as {kind.__name__}") from None
    setattr(sect, key, value)


def parse_config(text: str) -> Config:
    cfg = Config()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'section.key = value', got {line!r}")
        name, raw = (part.strip() for part in line.split("=", 1))
        if "." not in name:
            raise ConfigurationError(f"line {lineno}: key {name!r} lacks a section")
        section, key = name.split(".", 1)
        _assign(cfg, section, key, raw)
    return cfg


def format_config(cfg: Config) -> str:
    lines = []
    for section in SECTIONS:
        for f in dataclasses.fields(getattr(cfg, section)):
            lines.append(f"{section}.{f.name} = {_format(getattr(getattr(cfg, section), f.name))}")
    return "\n".join(lines) + "\n"


def load_config(path, env=None) -> Config:
    """Read a config file; ``SHIFTDIFF_SEED`` in the environment overrides ``train.seed``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise FileNotFoundError(f"cannot read config {path}: {err.strerror}") from err
    cfg = parse_config(text)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        _assign(cfg, "train", "seed", env[SEED_ENV])
    return cfg.validate()
