"""Mini-batch training with validation-based model selection."""

from __future__ import annotations

import copy
import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from . import global_fit
from .data import WindowedDataset
from .loss import LossParts, LossSpec, loss
from .mbo import MboUsageError
from .net import EncoderConfig, GevForecaster, to_tensor
from .reparam import DataBounds

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
DIVERGENCE_EPOCHS = 3
REPORT_COLUMNS = ("epoch", "nll_term", "gap_term", "sq_term", "total", "val_total")


class TrainingDivergedError(RuntimeError):
    def __init__(self, msg: str, report: TrainReport):
        super().__init__(msg)
        self.report = report


@dataclass
class OptimizerConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    max_epochs: int = 300
    patience: int = 30
    seed: int = 0


@dataclass
class EpochRecord:
    epoch: int
    nll: float
    gap: float
    sq: float
    total: float
    val_nll: float
    val_gap: float
    val_sq: float
    val_total: float


@dataclass
class TrainReport:
    spec: LossSpec
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    wall_time: float = 0.0
    diverged: bool = False

    @property
    def best(self) -> EpochRecord:
        return next(r for r in self.epochs if r.epoch == self.best_epoch)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for r in self.epochs:
                w.writerow([r.epoch, repr(r.nll), repr(r.gap), repr(r.sq), repr(r.total), repr(r.val_total)])


def evaluate_loss(model: GevForecaster, x: torch.Tensor, y: torch.Tensor, spec: LossSpec) -> LossParts:
    with torch.no_grad():
        out = model(x)
        return loss(out.params, out.yhat, y, spec)


def build_model(
    ds: WindowedDataset,
    config: EncoderConfig,
    spec: LossSpec,
    fit: global_fit.FitResult | None = None,
) -> tuple[GevForecaster, global_fit.FitResult]:
    """Create a model for ``ds`` and capture its bias offsets.

    The offsets steer the untrained outputs to the global GEV fit of the
    training targets (clamped into the regularity window).
    """
    x_tr, y_tr = ds.arrays("train")
    if fit is None:
        fit = global_fit.fit_global(y_tr, seed=config.seed)
    bounds = DataBounds(ds.y_min, ds.y_max, spec.tau)
    model = GevForecaster(config, bounds)
    model.capture_offsets(to_tensor(x_tr), global_fit.default_desired(fit))
    return model, fit


def _record(epoch, tr: LossParts, va: LossParts) -> EpochRecord:
    a, b = tr.as_floats(), va.as_floats()
    return EpochRecord(epoch, a["nll"], a["gap"], a["sq"], a["total"], b["nll"], b["gap"], b["sq"], b["total"])


def fit(
    model: GevForecaster,
    ds: WindowedDataset,
    spec: LossSpec,
    opt: OptimizerConfig = OptimizerConfig(),
    on_epoch: Callable[[EpochRecord, GevForecaster], None] | None = None,
) -> tuple[GevForecaster, TrainReport]:
    """Adam on shuffled mini-batches; keeps the weights of the best validation epoch.

    Epoch 0 in the report is the untrained (offset-corrected) model.

    Raises:
        MboUsageError: if the bias offsets were never captured.
        TrainingDivergedError: after ``DIVERGENCE_EPOCHS`` consecutive epochs
            whose training loss is non-finite or above ``DIVERGENCE_LIMIT``.
    """
    if not model.offsets.frozen:
        raise MboUsageError("capture the bias offsets before training")
    t0 = time.perf_counter()
    x_tr, y_tr = map(to_tensor, ds.arrays("train"))
    x_va, y_va = map(to_tensor, ds.arrays("val"))
    n = len(y_tr)
    rng = np.random.default_rng(opt.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=opt.learning_rate)

    report = TrainReport(spec)
    report.epochs.append(_record(0, evaluate_loss(model, x_tr, y_tr, spec), evaluate_loss(model, x_va, y_va, spec)))
    best_val = report.epochs[0].val_total
    best_state = copy.deepcopy(model.state_dict())
    since_best = 0
    bad_epochs = 0

    for epoch in range(1, opt.max_epochs + 1):
        model.train()
        perm = rng.permutation(n)
        for i in range(0, n, opt.batch_size):
            idx = torch.from_numpy(perm[i : i + opt.batch_size])
            optimizer.zero_grad(set_to_none=True)
            out = model(x_tr[idx])
            loss(out.params, out.yhat, y_tr[idx], spec).total.backward()
            optimizer.step()
        model.eval()
        try:
            rec = _record(epoch, evaluate_loss(model, x_tr, y_tr, spec), evaluate_loss(model, x_va, y_va, spec))
        except FloatingPointError as exc:
            log.warning("epoch %d: %s", epoch, exc)
            nan = math.nan
            rec = EpochRecord(epoch, nan, nan, nan, nan, nan, nan, nan, nan)
        report.epochs.append(rec)
        if on_epoch is not None:
            on_epoch(rec, model)

        if not math.isfinite(rec.total) or rec.total > DIVERGENCE_LIMIT:
            bad_epochs += 1
            if bad_epochs >= DIVERGENCE_EPOCHS:
                report.diverged = True
                report.wall_time = time.perf_counter() - t0
                model.load_state_dict(best_state)
                raise TrainingDivergedError(f"training diverged at epoch {epoch}", report)
        else:
            bad_epochs = 0

        if math.isfinite(rec.val_total) and rec.val_total < best_val:
            best_val = rec.val_total
            best_state = copy.deepcopy(model.state_dict())
            report.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= opt.patience:
                break

    model.load_state_dict(best_state)
    report.wall_time = time.perf_counter() - t0
    log.info(
        "trained %d epochs in %.1fs; best epoch %d (val total %.6g)",
        len(report.epochs) - 1,
        report.wall_time,
        report.best_epoch,
        best_val,
    )
    return model, report
