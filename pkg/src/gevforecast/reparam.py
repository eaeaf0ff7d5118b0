"""Map unconstrained head outputs to GEV parameters that respect the support.

The support condition ``1 + xi (y - mu) / sigma + tau >= 0`` for every training
target is equivalent to an interval on ``xi`` built from the training range
``[y_min, y_max]``::

    -sigma (1 + tau) / (y_max - mu)  <=  xi  <=  sigma (1 + tau) / (mu - y_min)

``constrain`` places ``xi_u`` below the upper end and ``xi_l`` above the lower
end with softplus gaps, so both ends hold exactly for any raw input.

The functions here work on floats, numpy arrays and torch tensors alike.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np
import torch

DEFAULT_TAU = 0.1
MU_EPS_FRACTION = 1e-4


def softplus(x):
    """``log(1 + exp(x))`` without overflow for large ``x``."""
    if isinstance(x, torch.Tensor):
        return torch.clamp(x, min=0) + torch.log1p(torch.exp(-torch.abs(x)))
    x = np.asarray(x, dtype=float)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def _clamp_min(x, lo: float):
    if isinstance(x, torch.Tensor):
        return torch.clamp(x, min=lo)
    out = np.maximum(x, lo)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DataBounds:
    """Training-split target range and constraint tolerance."""

    y_min: float
    y_max: float
    tau: float = DEFAULT_TAU

    def __post_init__(self) -> None:
        if not self.y_max > self.y_min:
            raise ValueError(f"need y_max > y_min, got [{self.y_min}, {self.y_max}]")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")

    @property
    def mu_eps(self) -> float:
        return MU_EPS_FRACTION * (self.y_max - self.y_min)


@dataclass
class RawHead:
    mu_raw: Any
    p1: Any
    p2: Any
    p3: Any


@dataclass
class ConstrainedParams:
    mu: Any
    sigma: Any
    xi_u: Any
    xi_l: Any
    bound_lo: Any
    bound_hi: Any
    # true where mu sat within mu_eps of, or beyond, an end of the training range
    degenerate: Any = False


class XiBounds(NamedTuple):
    lo: Any
    hi: Any
    degenerate: Any


def xi_bounds(sigma, mu, b: DataBounds) -> XiBounds:
    """Shape interval that keeps every training target within tolerance of the support.

    Denominators are floored at ``b.mu_eps``; a location that is too close to,
    or outside, the training range is flagged rather than producing a
    sign-flipped interval.
    """
    below = mu - b.y_min
    above = b.y_max - mu
    degenerate = (below < b.mu_eps) | (above < b.mu_eps)
    scale = sigma * (1.0 + b.tau)
    hi = scale / _clamp_min(below, b.mu_eps)
    lo = -scale / _clamp_min(above, b.mu_eps)
    return XiBounds(lo, hi, degenerate)


def constrain(raw: RawHead, b: DataBounds, *, location_offset=0.0) -> ConstrainedParams:
    """Apply the softplus reparameterization to one head output.

    ``location_offset`` is the bias that will later be removed from ``mu``;
    the shape interval is computed at the debiased location so it describes
    the parameters that are actually used. ``mu`` itself is passed through.
    """
    sigma = softplus(raw.p1)
    bounds = xi_bounds(sigma, raw.mu_raw - location_offset, b)
    xi_u = bounds.hi - softplus(raw.p2)
    xi_l = softplus(raw.p3) + bounds.lo
    return ConstrainedParams(
        mu=raw.mu_raw,
        sigma=sigma,
        xi_u=xi_u,
        xi_l=xi_l,
        bound_lo=bounds.lo,
        bound_hi=bounds.hi,
        degenerate=bounds.degenerate,
    )


def effective_xi(c: ConstrainedParams):
    """Shape estimate used downstream: the upper-bound branch."""
    return c.xi_u
