"""Maximum likelihood fit of one GEV to a whole set of block maxima.

The fit serves as the predictor-free baseline and as the source of the
"desired" parameters the bias offset steers the untrained network toward.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import gev
from .gev import GevParams

log = logging.getLogger(__name__)

XI_BOX = (-0.49, 0.99)
DESIRED_XI_BOX = (-0.45, 0.9)
MIN_SAMPLES = 20


class DegenerateDataError(ValueError):
    """Raised when the data admit no GEV maximum likelihood estimate."""


@dataclass
class FitResult:
    params: GevParams
    nll: float
    converged: bool
    iterations: int
    y_min: float
    y_max: float
    message: str = ""
    restarts: list[float] = field(default_factory=list)


def _nll(theta: np.ndarray, ys: np.ndarray) -> float:
    mu, log_sigma, xi = theta
    p = GevParams(mu, np.exp(log_sigma), xi)
    ll = gev.log_likelihood(p, ys)
    return -ll if np.isfinite(ll) else np.inf


def _initial_guess(ys: np.ndarray) -> np.ndarray:
    q25, q50, q75 = np.percentile(ys, [25, 50, 75])
    sigma0 = (q75 - q25) / 1.35
    if sigma0 <= 0:
        sigma0 = ys.std()
    theta = np.array([q50, np.log(sigma0), 0.1])
    if not np.isfinite(_nll(theta, ys)):
        theta[2] = 0.0  # Gumbel has unbounded support on both sides
    return theta


def fit_global(
    ys,
    init: GevParams | None = None,
    *,
    restarts: int = 5,
    seed: int = 0,
    maxiter: int = 4000,
) -> FitResult:
    """Fit ``(mu, sigma, xi)`` by Nelder-Mead on ``(mu, log sigma, xi)``.

    The shape is box-constrained to ``XI_BOX``. The first start uses
    quantile heuristics (or ``init``); each restart perturbs the best point
    found so far.

    Raises:
        DegenerateDataError: if the data are constant or non-finite.
    """
    ys = np.asarray(ys, dtype=float).ravel()
    if ys.size == 0 or not np.all(np.isfinite(ys)):
        raise DegenerateDataError("block maxima must be a non-empty finite vector")
    if np.ptp(ys) == 0:
        raise DegenerateDataError("block maxima have zero variance; no GEV MLE exists")
    if ys.size < MIN_SAMPLES:
        warnings.warn(f"fitting a GEV to only {ys.size} block maxima", stacklevel=2)

    if init is not None:
        theta0 = np.array([float(init.mu), np.log(float(init.sigma)), float(init.xi)])
        theta0[2] = np.clip(theta0[2], *XI_BOX)
        if not np.isfinite(_nll(theta0, ys)):
            theta0 = _initial_guess(ys)
    else:
        theta0 = _initial_guess(ys)

    rng = np.random.default_rng(seed)
    bounds = [(None, None), (None, None), XI_BOX]
    opts = {"xatol": 1e-9, "fatol": 1e-11, "maxiter": maxiter, "maxfev": 2 * maxiter}
    best = None
    history = []
    iterations = 0
    start = theta0
    for k in range(restarts):
        res = minimize(_nll, start, args=(ys,), method="Nelder-Mead", bounds=bounds, options=opts)
        iterations += int(res.nit)
        history.append(float(res.fun))
        if best is None or res.fun < best.fun:
            best = res
        scale = np.array([0.1, 0.1, 0.05]) if k else np.zeros(3)
        start = best.x + scale * rng.standard_normal(3)
        start[2] = np.clip(start[2], *XI_BOX)
        if not np.isfinite(_nll(start, ys)):
            start = best.x.copy()

    mu, log_sigma, xi = best.x
    params = GevParams(float(mu), float(np.exp(log_sigma)), float(xi))
    nll = float(best.fun)
    feasible = np.isfinite(nll) and bool(np.all(gev.support_margin(params, ys).ok))
    converged = bool(best.success) and feasible
    if not converged:
        log.warning("global GEV fit did not converge: %s", best.message)
    return FitResult(
        params=params,
        nll=nll,
        converged=converged,
        iterations=iterations,
        y_min=float(ys.min()),
        y_max=float(ys.max()),
        message=str(best.message),
        restarts=history,
    )


def default_desired(fit: FitResult) -> GevParams:
    """Clamp the global fit into the regularity window; used as the MBO target."""
    mu, sigma, xi = fit.params.as_tuple()
    return GevParams(
        float(np.clip(mu, fit.y_min, fit.y_max)),
        sigma,
        float(np.clip(xi, *DESIRED_XI_BOX)),
    )
