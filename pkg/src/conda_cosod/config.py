"""Run configuration: one JSON file with encoder/aggregation/pipeline/loss/train/data sections.

Precedence: built-in defaults < config file < command-line overrides.
Unknown keys are rejected at every level.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

MODES = ("off", "full", "sac", "cac")
VARIANTS = ("pag", "sag")
OCC_MODES = ("object", "full", "none")


class ConfigError(ValueError):
    pass


@dataclass
class EncoderConfig:
    channels: tuple[int, ...] = (16, 32, 64, 64, 64)
    layers: tuple[int, ...] = (1, 1, 2, 2, 2)
    # association features taken after the layer's ReLU (False) or before it (True)
    pre_relu_features: bool = False

    def validate(self) -> None:
        if len(self.channels) != 5 or len(self.layers) != 5:
            raise ConfigError("encoder needs exactly 5 stages")
        if min(self.layers) < 1 or min(self.channels) < 1:
            raise ConfigError("encoder layer counts and channels must be >= 1")


@dataclass
class AggConfig:
    hidden: int = 16
    num_layers: int = 2
    factor: int = 2

    def validate(self) -> None:
        if self.num_layers < 1 or self.hidden < 1:
            raise ConfigError("aggregation needs >= 1 layer and >= 1 hidden channel")
        if self.factor < 2:
            raise ConfigError("aggregation downsample factor must be >= 2")


@dataclass
class PipelineConfig:
    mode: str = "cac"
    variant: str = "pag"
    k: int = 9
    decoder_channels: int = 32
    share_agg_passes: bool = True
    # optional tanh bound on predicted offsets, in pixels; None = unbounded
    offset_bound: float | None = None
    zero_self_pairs: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.k < 1 or self.k % 2 == 0:
            raise ConfigError("K must be a positive odd integer")


@dataclass
class LossConfig:
    bce: float = 1.0
    iou: float = 1.0
    occ: float = 0.1
    occ_mode: str = "object"
    ssim_window: int = 3

    def validate(self) -> None:
        if self.occ_mode not in OCC_MODES:
            raise ConfigError(f"occ_mode must be one of {OCC_MODES}")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ConfigError("ssim_window must be odd")


@dataclass
class TrainConfig:
    steps: int = 300
    lr: float = 1e-4
    # None: decay at 2/3 of the run
    decay_step: int | None = None
    decay_factor: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    clip_norm: float | None = 5.0
    seed: int = 0
    checkpoint_every: int = 0
    eval_every: int = 0
    dtype: str = "float64"

    def validate(self) -> None:
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.decay_step is not None and self.decay_step > self.steps:
            raise ConfigError("decay_step must be <= steps")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    @property
    def decay_at(self) -> int:
        return self.decay_step if self.decay_step is not None else (2 * self.steps) // 3


@dataclass
class DataConfig:
    n: int = 6
    size: int = 64
    groups: int = 4
    seed: int = 0
    max_distractors: int = 2

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError("groups need n >= 2 images")


@dataclass
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    aggregation: AggConfig = field(default_factory=AggConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> RunConfig:
        for f in dataclasses.fields(self):
            getattr(self, f.name).validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def model_dict(self) -> dict[str, Any]:
        """The sections that determine parameter shapes."""
        d = self.to_dict()
        return {k: d[k] for k in ("encoder", "aggregation", "pipeline")}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunConfig:
        return _build(cls, d, "config").validate()

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def override(self, dotted: dict[str, Any]) -> RunConfig:
        """Apply ``{"section.key": value}`` overrides, returning a new config."""
        d = self.to_dict()
        for key, value in dotted.items():
            section, _, name = key.partition(".")
            if section not in d or name not in d[section]:
                raise ConfigError(f"unknown config key {key!r}")
            d[section][name] = value
        return RunConfig.from_dict(d)


def _build(cls, d: dict[str, Any], where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        elif isinstance(default, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)
