"""Forecast metrics on the original (de-standardized) scale."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from . import gev
from .data import SyntheticTruth, WindowedDataset
from .gev import GevParams
from .global_fit import FitResult
from .net import GevForecaster, to_tensor

FORECAST_COLUMNS = ("y", "yhat", "y_lo", "y_hi", "mu", "sigma", "xi_u", "xi_l")


class UndefinedCorrelationError(ValueError):
    pass


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError(f"need equal non-zero lengths, got {pred.size} and {truth.size}")
    return pred, truth


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def pearson(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    if np.ptp(truth) == 0 or np.ptp(pred) == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant sequence")
    dp, dt = pred - pred.mean(), truth - truth.mean()
    return float(np.dot(dp, dt) / np.sqrt(np.dot(dp, dp) * np.dot(dt, dt)))


def coverage(y_lo, y_hi, truth) -> float:
    """Fraction of truths inside the closed interval ``[y_lo, y_hi]``."""
    lo, truth = _pair(y_lo, truth)
    hi, _ = _pair(y_hi, truth)
    return float(np.mean((truth >= lo) & (truth <= hi)))


@dataclass
class ForecastTable:
    y: np.ndarray
    yhat: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    xi_u: np.ndarray
    xi_l: np.ndarray

    @property
    def params(self) -> GevParams:
        return GevParams(self.mu, self.sigma, self.xi_u)

    def sorted_by_block_max(self) -> ForecastTable:
        order = np.argsort(self.y, kind="stable")
        return ForecastTable(**{k: getattr(self, k)[order] for k in FORECAST_COLUMNS})

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FORECAST_COLUMNS)
            for row in zip(*(getattr(self, k) for k in FORECAST_COLUMNS)):
                w.writerow([repr(float(v)) for v in row])


def predict(model: GevForecaster, ds: WindowedDataset, split: str = "test") -> ForecastTable:
    """Run the model on one split and map everything back to data units."""
    x, _ = ds.arrays(split)
    model.eval()
    with torch.no_grad():
        out = model(to_tensor(x))
    s, m = ds.y_std, ds.y_mean
    c = out.params
    return ForecastTable(
        y=ds.y_raw[ds.mask(split)],
        yhat=out.yhat.numpy() * s + m,
        y_lo=out.y_lo.numpy() * s + m,
        y_hi=out.y_hi.numpy() * s + m,
        mu=c.mu.numpy() * s + m,
        sigma=c.sigma.numpy() * s,
        xi_u=c.xi_u.numpy(),
        xi_l=c.xi_l.numpy(),
    )


def total_nll(p: GevParams, y) -> float:
    """Negative log-likelihood; ``inf`` if any point lies outside its support."""
    return -gev.log_likelihood(p, y)


@dataclass
class NllComparison:
    model: float
    truth: float | None
    global_fit: float
    n: int
    out_of_support: int

    @property
    def improvement(self) -> float:
        """Relative reduction of the model NLL below the global-fit NLL."""
        return (self.global_fit - self.model) / abs(self.global_fit)


def nll_comparison(
    ds: WindowedDataset,
    model: GevForecaster,
    fit: FitResult,
    truth: SyntheticTruth | None = None,
    split: str = "test",
) -> NllComparison:
    """Test-set NLL in data units under per-window, true and global parameters.

    ``fit`` is the global fit on standardized training targets, as produced
    during training.
    """
    table = predict(model, ds, split)
    y = table.y
    model_nll = total_nll(table.params, y)
    glob = ds.params_to_original(fit.params)
    glob_nll = total_nll(GevParams(float(glob.mu), float(glob.sigma), float(glob.xi)), y)
    truth_nll = None
    if truth is not None:
        truth_nll = total_nll(truth.params(ds.mask(split)), y)
    outside = int(np.sum(~gev.support_margin(table.params, y).ok))
    return NllComparison(model_nll, truth_nll, glob_nll, len(y), outside)


def evaluate(model: GevForecaster, ds: WindowedDataset, split: str = "test") -> tuple[dict, ForecastTable]:
    table = predict(model, ds, split)
    metrics = {
        "split": split,
        "n": int(len(table.y)),
        "rmse": rmse(table.yhat, table.y),
        "pearson": pearson(table.yhat, table.y),
        "coverage": coverage(table.y_lo, table.y_hi, table.y),
        "quantiles": list(model.config.quantiles),
        "nll": total_nll(table.params, table.y),
    }
    return metrics, table


def write_metrics(out_dir, run_id: str, metrics: dict) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    row = {"run_id": run_id, **metrics}
    (out_dir / "metrics.json").write_text(json.dumps(row, indent=2, sort_keys=True) + "\n")
    flat = {k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in row.items()}
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=sorted(flat))
        w.writeheader()
        w.writerow(flat)


def comparison_dict(c: NllComparison) -> dict:
    return {**asdict(c), "improvement": c.improvement}
