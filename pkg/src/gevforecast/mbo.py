"""Model bias offset.

The first, gradient-free pass of a freshly initialized network is compared
with a set of acceptable GEV parameters; the difference is frozen and
subtracted from every later output so training starts from those parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch

from .gev import GevParams
from .reparam import ConstrainedParams

SIGMA_FLOOR = 1e-4


class MboUsageError(RuntimeError):
    """Raised on out-of-order use of bias offsets."""


@dataclass
class BiasOffsets:
    mu_bias: float = 0.0
    sigma_bias: float = 0.0
    xi_u_bias: float = 0.0
    xi_l_bias: float = 0.0
    frozen: bool = False

    def __setattr__(self, name, value):
        if getattr(self, "frozen", False):
            raise MboUsageError("bias offsets are frozen for the lifetime of the run")
        super().__setattr__(name, value)

    @classmethod
    def zeros(cls) -> BiasOffsets:
        return cls(frozen=True)

    def to_dict(self) -> dict[str, float]:
        return {
            "mu_bias": self.mu_bias,
            "sigma_bias": self.sigma_bias,
            "xi_u_bias": self.xi_u_bias,
            "xi_l_bias": self.xi_l_bias,
        }


@dataclass(frozen=True)
class DesiredParams:
    """Target values for the four debiased outputs."""

    mu: float
    sigma: float
    xi_u: float
    xi_l: float

    @classmethod
    def from_gev(cls, p: GevParams) -> DesiredParams:
        mu, sigma, xi = p.as_tuple()
        return cls(mu, sigma, xi, xi)


def _mean(v) -> float:
    if isinstance(v, torch.Tensor):
        return float(v.detach().double().mean())
    return float(v) if not hasattr(v, "mean") else float(v.mean())


def capture(
    initial: ConstrainedParams,
    desired: DesiredParams | GevParams,
    offsets: BiasOffsets | None = None,
) -> BiasOffsets:
    """Record ``initial - desired`` for each output, using batch means.

    Fills ``offsets`` in place when given; a record that is already frozen
    cannot be captured again.
    """
    if isinstance(desired, GevParams):
        desired = DesiredParams.from_gev(desired)
    if offsets is None:
        offsets = BiasOffsets()
    if offsets.frozen:
        raise MboUsageError("bias offsets were already captured for this run")
    offsets.mu_bias = _mean(initial.mu) - desired.mu
    offsets.sigma_bias = _mean(initial.sigma) - desired.sigma
    offsets.xi_u_bias = _mean(initial.xi_u) - desired.xi_u
    offsets.xi_l_bias = _mean(initial.xi_l) - desired.xi_l
    offsets.frozen = True
    return offsets


def apply(current: ConstrainedParams, off: BiasOffsets) -> ConstrainedParams:
    """Subtract the frozen biases; the scale is floored at ``SIGMA_FLOOR``."""
    if not off.frozen:
        raise MboUsageError("bias offsets must be captured before they are applied")
    sigma = current.sigma - off.sigma_bias
    if isinstance(sigma, torch.Tensor):
        sigma = torch.clamp(sigma, min=SIGMA_FLOOR)
    else:
        sigma = max(sigma, SIGMA_FLOOR) if isinstance(sigma, float) else sigma.clip(min=SIGMA_FLOOR)
    return replace(
        current,
        mu=current.mu - off.mu_bias,
        sigma=sigma,
        xi_u=current.xi_u - off.xi_u_bias,
        xi_l=current.xi_l - off.xi_l_bias,
    )
