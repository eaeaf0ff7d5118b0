"""Combined training objective.

    total = l1 * (l2 * NLL + (1 - l2) * sum (xi_u - xi_l)^2) + (1 - l1) * sum (y - yhat)^2

Each window contributes the negative log density of its own block maximum
under its own parameters, with the shape taken from the ``xi_u`` branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from . import gev_torch
from .reparam import DEFAULT_TAU, ConstrainedParams


class LossNotFiniteError(FloatingPointError):
    def __init__(self, term: str, index: int, value: float):
        super().__init__(f"non-finite {term} term at window {index} (value {value})")
        self.term = term
        self.index = index


@dataclass(frozen=True)
class LossSpec:
    lambda1: float = 0.9
    lambda2: float = 0.5
    tau: float = DEFAULT_TAU

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.tau < 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")


@dataclass
class LossParts:
    total: torch.Tensor
    nll: torch.Tensor
    gap: torch.Tensor
    sq: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach()) for k in ("total", "nll", "gap", "sq")}


def _check(term: str, values: torch.Tensor) -> None:
    bad = ~torch.isfinite(values)
    if bool(bad.any()):
        i = int(torch.nonzero(bad)[0, 0])
        raise LossNotFiniteError(term, i, float(values[i].detach()))


def loss(params: ConstrainedParams, yhat: torch.Tensor, y: torch.Tensor, spec: LossSpec) -> LossParts:
    nll_i = gev_torch.nll(params.mu, params.sigma, params.xi_u, y, clamp=True)
    gap_i = (params.xi_u - params.xi_l) ** 2
    sq_i = (y - yhat) ** 2
    _check("nll", nll_i)
    _check("gap", gap_i)
    _check("squared-error", sq_i)
    nll, gap, sq = nll_i.sum(), gap_i.sum(), sq_i.sum()
    l1, l2 = spec.lambda1, spec.lambda2
    total = l1 * (l2 * nll + (1.0 - l2) * gap) + (1.0 - l1) * sq
    return LossParts(total=total, nll=nll, gap=gap, sq=sq)
