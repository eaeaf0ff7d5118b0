"""Generalized extreme value distribution: cdf, quantile, mean, likelihood.

All functions are pure and broadcast over numpy arrays, so a ``GevParams``
may hold either scalars or one parameter triple per window. Near-zero shape
values switch to the Gumbel limit, and the general branch is written with
``log1p``/``expm1`` so both sides of the switch agree to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

XI_EPS = 1e-8
BRACKET_FLOOR = 1e-6
EULER_GAMMA = float(np.euler_gamma)

# (lower, upper) open interval of shape values with regular ML asymptotics and a finite mean
REGULAR_XI = (-0.5, 1.0)


class GevDomainError(ValueError):
    """Raised when an argument lies outside the domain of a GEV operation."""


class UndefinedMeanError(GevDomainError):
    """Raised when the mean is requested for a shape value of 1 or more."""


@dataclass(frozen=True)
class GevParams:
    """Location, scale and shape of a GEV distribution.

    Fields may be floats or equally-broadcastable arrays (one entry per window).
    """

    mu: float | np.ndarray
    sigma: float | np.ndarray
    xi: float | np.ndarray

    def __post_init__(self) -> None:
        sigma = np.asarray(self.sigma, dtype=float)
        if not np.all(sigma > 0):
            raise GevDomainError(f"scale must be strictly positive, got {self.sigma!r}")

    @property
    def feasible(self) -> bool | np.ndarray:
        xi = np.asarray(self.xi, dtype=float)
        ok = (xi > REGULAR_XI[0]) & (xi < REGULAR_XI[1])
        return bool(ok) if ok.ndim == 0 else ok

    def as_tuple(self) -> tuple[float, float, float]:
        return float(self.mu), float(self.sigma), float(self.xi)


@dataclass(frozen=True)
class SupportCheck:
    value: float | np.ndarray
    ok: bool | np.ndarray
    margin: float | np.ndarray


def _arrays(p: GevParams):
    return (
        np.asarray(p.mu, dtype=float),
        np.asarray(p.sigma, dtype=float),
        np.asarray(p.xi, dtype=float),
    )


def _out(a: np.ndarray):
    return float(a) if np.ndim(a) == 0 else a


def support_margin(p: GevParams, y) -> SupportCheck:
    """Return ``1 + xi (y - mu) / sigma`` and whether it is positive."""
    mu, sigma, xi = _arrays(p)
    y = np.asarray(y, dtype=float)
    margin = 1.0 + xi * (y - mu) / sigma
    ok = margin > 0
    return SupportCheck(value=_out(y), ok=bool(ok) if ok.ndim == 0 else ok, margin=_out(margin))


def _safe_xi(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gumbel = np.abs(xi) < XI_EPS
    return gumbel, np.where(gumbel, 1.0, xi)


def cdf(p: GevParams, y):
    """Cumulative distribution function.

    Outside the support the value is 0 below a lower endpoint (``xi > 0``)
    and 1 above an upper endpoint (``xi < 0``).
    """
    mu, sigma, xi = _arrays(p)
    z = (np.asarray(y, dtype=float) - mu) / sigma
    gumbel, xs = _safe_xi(xi)
    t = xs * z
    inside = t > -1.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        general = np.exp(-np.exp(-np.log1p(np.where(inside, t, 0.0)) / xs))
        gum = np.exp(-np.exp(-z))
    outside_val = np.where(xs > 0, 0.0, 1.0)
    res = np.where(gumbel, gum, np.where(inside, general, outside_val))
    return _out(res)


def quantile(p: GevParams, prob):
    """Value below which a fraction ``prob`` of the distribution lies."""
    prob = np.asarray(prob, dtype=float)
    if np.any((prob <= 0) | (prob >= 1)) or np.any(np.isnan(prob)):
        raise GevDomainError("probability must lie strictly between 0 and 1")
    mu, sigma, xi = _arrays(p)
    gumbel, xs = _safe_xi(xi)
    llp = np.log(-np.log(prob))
    general = mu + sigma * np.expm1(-xs * llp) / xs
    gum = mu - sigma * llp
    return _out(np.where(gumbel, gum, general))


def gamma(x):
    """Gamma function (thin wrapper kept so callers share one implementation)."""
    return special.gamma(x)


def mean(p: GevParams):
    """Expected value; defined only for shape below 1."""
    mu, sigma, xi = _arrays(p)
    if np.any(xi >= 1.0):
        raise UndefinedMeanError(f"GEV mean is undefined for xi >= 1 (got {p.xi!r})")
    gumbel, xs = _safe_xi(xi)
    # Gamma(1 - xi) - 1 via expm1(lgamma) avoids cancellation for small xi
    general = mu + sigma * np.expm1(special.gammaln(1.0 - xs)) / xs
    gum = mu + sigma * EULER_GAMMA
    return _out(np.where(gumbel, gum, general))


def log_density(p: GevParams, y, *, clamp: bool = False):
    """Pointwise log density.

    Points outside the support give ``-inf`` unless ``clamp`` is set, in which
    case the bracket is floored at ``BRACKET_FLOOR`` (the training-mode value).
    """
    mu, sigma, xi = _arrays(p)
    z = (np.asarray(y, dtype=float) - mu) / sigma
    gumbel, xs = _safe_xi(xi)
    t = 1.0 + xs * z
    inside = t > 0
    tc = np.maximum(t, BRACKET_FLOOR) if clamp else np.where(inside, t, 1.0)
    with np.errstate(over="ignore"):
        log_t = np.log(tc)
        general = -np.log(sigma) - (1.0 / xs + 1.0) * log_t - np.exp(-log_t / xs)
        gum = -np.log(sigma) - z - np.exp(-z)
    if not clamp:
        general = np.where(inside, general, -np.inf)
    return _out(np.where(gumbel, gum, general))


def log_likelihood(p: GevParams, ys, *, clamp: bool = False) -> float:
    """Sum of log densities of ``ys``; ``-inf`` if any lies outside the support."""
    ys = np.asarray(ys, dtype=float)
    if ys.size == 0:
        raise GevDomainError("log-likelihood needs at least one observation")
    return float(np.sum(log_density(p, ys, clamp=clamp)))


def sample(p: GevParams, size, rng: np.random.Generator):
    """Inverse-CDF draws."""
    u = rng.random(size)
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
    return quantile(p, u)
