"""Differentiable GEV formulas on torch tensors (mirrors of ``gev``)."""

from __future__ import annotations

import math

import torch

from .gev import BRACKET_FLOOR, XI_EPS

# caps the exponent of the t**(-1/xi) term so clamped brackets stay finite as xi -> 0+
POW_CAP = 50.0


def _split(xi: torch.Tensor):
    gumbel = xi.abs() < XI_EPS
    return gumbel, torch.where(gumbel, torch.ones_like(xi), xi)


def nll(mu, sigma, xi, y, *, clamp: bool = True) -> torch.Tensor:
    """Per-observation negative log density.

    With ``clamp`` (training mode) a point whose bracket ``t = 1 + xi z``
    falls below ``BRACKET_FLOOR`` is charged a bounded soft penalty instead:
    ``log sigma + max((1/xi + 1) log(floor), -log(floor)) + (floor - t)``.
    The exact density is useless there: its log term becomes a reward once
    ``xi < -1``, and for ``xi > 0`` the power term at the floor is
    astronomically large with no gradient back toward the support. Without
    ``clamp`` points outside the support give ``inf``.
    """
    z = (y - mu) / sigma
    gumbel, xs = _split(xi)
    t = 1.0 + xs * z
    inside = t > 0
    tc = torch.clamp(t, min=BRACKET_FLOOR) if clamp else torch.where(inside, t, torch.ones_like(t))
    log_t = torch.log(tc)
    power = torch.exp(torch.clamp(-log_t / xs, max=POW_CAP))
    log_term = (1.0 / xs + 1.0) * log_t
    general = torch.log(sigma) + log_term + power
    if clamp:
        charge = torch.clamp(log_term, min=-math.log(BRACKET_FLOOR)) + (BRACKET_FLOOR - t)
        general = torch.where(inside & (t >= BRACKET_FLOOR), general, torch.log(sigma) + charge)
    else:
        general = torch.where(inside, general, torch.full_like(general, math.inf))
    gum = torch.log(sigma) + z + torch.exp(torch.clamp(-z, max=POW_CAP))
    return torch.where(gumbel, gum, general)


def quantile(mu, sigma, xi, prob: float) -> torch.Tensor:
    llp = math.log(-math.log(prob))
    gumbel, xs = _split(xi)
    general = mu + sigma * torch.expm1(-xs * llp) / xs
    return torch.where(gumbel, mu - sigma * llp, general)


def mean(mu, sigma, xi, *, xi_max: float = 0.999) -> torch.Tensor:
    """Analytic mean; ``xi`` is capped at ``xi_max`` where the mean would not exist."""
    gumbel, xs = _split(torch.clamp(xi, max=xi_max))
    general = mu + sigma * torch.expm1(torch.lgamma(1.0 - xs)) / xs
    return torch.where(gumbel, mu + sigma * 0.5772156649015329, general)
