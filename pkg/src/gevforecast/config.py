"""Run configuration.

A config file is a flat JSON object whose keys are the fields of
``RunConfig``; unknown keys are rejected. Precedence when assembling the
effective config: command-line flag, then config file, then the defaults
below.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .data import WindowSpec
from .loss import LossSpec
from .net import EncoderConfig
from .train import OptimizerConfig


@dataclass(frozen=True)
class RunConfig:
    # loss
    lambda1: float = 0.9
    lambda2: float = 0.5
    tau: float = 0.1
    # optimizer
    batch_size: int = 64
    learning_rate: float = 1e-3
    max_epochs: int = 300
    patience: int = 30
    # model
    hidden_width: int = 32
    layers: int = 2
    head_widths: tuple[int, ...] = (16, 16)
    point_head: str = "fcn"
    quantiles: tuple[float, float] = (0.05, 0.95)
    # windows (ignored for pre-windowed datasets)
    alpha: int = 16
    beta: int = 8
    stride: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "head_widths", tuple(self.head_widths))
        object.__setattr__(self, "quantiles", tuple(self.quantiles))

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> RunConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def override(self, **kw) -> RunConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head_widths"] = list(self.head_widths)
        d["quantiles"] = list(self.quantiles)
        return d

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @property
    def loss_spec(self) -> LossSpec:
        return LossSpec(self.lambda1, self.lambda2, self.tau)

    @property
    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(self.batch_size, self.learning_rate, self.max_epochs, self.patience, self.seed)

    @property
    def window_spec(self) -> WindowSpec:
        return WindowSpec(self.alpha, self.beta, self.stride)

    def encoder(self, input_width: int) -> EncoderConfig:
        return EncoderConfig(
            input_width=input_width,
            hidden_width=self.hidden_width,
            layers=self.layers,
            head_widths=self.head_widths,
            seed=self.seed,
            point_head=self.point_head,
            quantiles=self.quantiles,
        )
