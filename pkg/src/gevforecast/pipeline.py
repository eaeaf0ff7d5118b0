"""End-to-end runs: global fit, bias-offset capture, training, evaluation."""

from __future__ import annotations

from dataclasses import dataclass

from . import metrics, train
from .config import RunConfig
from .data import WindowedDataset
from .global_fit import FitResult
from .net import GevForecaster
from .train import TrainReport


@dataclass
class RunResult:
    model: GevForecaster
    report: TrainReport
    fit: FitResult
    config: RunConfig


def run(ds: WindowedDataset, cfg: RunConfig, fit: FitResult | None = None) -> RunResult:
    spec = cfg.loss_spec
    model, fit = train.build_model(ds, cfg.encoder(ds.x_raw.shape[-1]), spec, fit)
    model, report = train.fit(model, ds, spec, cfg.optimizer)
    return RunResult(model, report, fit, cfg)


def split_metrics(result: RunResult, ds: WindowedDataset, split: str = "test") -> dict:
    m, _ = metrics.evaluate(result.model, ds, split)
    return m
