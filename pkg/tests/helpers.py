"""Shared fixtures-by-function for the test suite."""

from __future__ import annotations

import functools
from pathlib import Path

import numpy as np
import torch

from gevforecast import data
from gevforecast.gev import GevParams
from gevforecast.loss import LossSpec, loss
from gevforecast.net import EncoderConfig, GevForecaster, gradients, to_tensor
from gevforecast.reparam import DataBounds

ROOT = Path(__file__).resolve().parent.parent
HURDAT2 = ROOT / "data" / "hurdat2_nhc_1980_2022.txt.gz"


@functools.lru_cache(maxsize=1)
def hurricane_series():
    return data.ingest_hurdat2(HURDAT2)


def hurricane_dataset() -> data.WindowedDataset:
    return data.window(hurricane_series(), data.HURRICANE_WINDOWS)


def small_problem(seed=0, scale=1.0, n=12, steps=6, features=2, hidden=5):
    """A small captured model plus a standardized batch, weights scaled by ``scale``."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, steps, features))
    y = rng.gumbel(size=n) * 0.5 + 0.2
    bounds = DataBounds(float(y.min()), float(y.max()), 0.1)
    model = GevForecaster(EncoderConfig(input_width=features, hidden_width=hidden, head_widths=(4, 4), seed=seed), bounds)
    with torch.no_grad():
        for p in model.parameters():
            p.mul_(scale)
    model.capture_offsets(to_tensor(x), GevParams(float(np.median(y)), 0.5, 0.1))
    return model, x, y


def finite_difference_agreement(model, x, y, spec: LossSpec, probes=200, step=1e-5, seed=0, tol=1e-4):
    """Fraction of randomly probed weight coordinates whose autodiff gradient
    matches a central difference to relative error below ``tol``.

    The relative error's denominator is floored at the central difference's
    roundoff level, ``10 * eps * |loss| / step`` (the factor covers rounding
    accumulated over the per-window sum), divided by ``tol``: below that a
    float64 difference quotient cannot resolve a 1e-4 relative error, so an
    agreement to within roundoff counts as a match.
    """
    grads = gradients(model, x, y, spec)
    xt, yt = to_tensor(x), to_tensor(y)

    def total():
        with torch.no_grad():
            out = model(xt)
            return float(loss(out.params, out.yhat, yt, spec).total)

    floor = 10 * np.finfo(float).eps * abs(total()) / step / tol
    named = dict(model.named_parameters())
    names = sorted(named)
    rng = np.random.default_rng(seed)
    ok = 0
    for _ in range(probes):
        name = names[rng.integers(len(names))]
        p = named[name]
        flat = p.data.view(-1)
        i = int(rng.integers(flat.numel()))
        orig = float(flat[i])
        flat[i] = orig + step
        up = total()
        flat[i] = orig - step
        down = total()
        flat[i] = orig
        fd = (up - down) / (2 * step)
        ad = float(grads[name].reshape(-1)[i])
        denom = max(abs(fd), abs(ad), floor)
        ok += abs(fd - ad) / denom < tol
    return ok / probes


def make_dataset(x, y, split) -> data.WindowedDataset:
    """Pre-windowed dataset standardized with its own training rows."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    split = np.asarray(split)
    tr = split == "train"
    xs = x[tr].reshape(-1, x.shape[-1])
    x_std = xs.std(axis=0)
    return data.WindowedDataset(
        x_raw=x,
        y_raw=y,
        split=split,
        entity=np.full(len(y), "e"),
        start=np.arange(len(y), dtype=np.int64),
        x_mean=xs.mean(axis=0),
        x_std=np.where(x_std > 0, x_std, 1.0),
        y_mean=float(y[tr].mean()),
        y_std=float(y[tr].std()),
        target_col=None,
    )


ACCEPTANCE: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    """Record and print one acceptance line; the conftest repeats them at the end."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
