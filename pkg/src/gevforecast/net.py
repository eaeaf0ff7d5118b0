"""Recurrent GEV forecaster.

A stacked LSTM reads the predictor window; a linear head emits the four raw
outputs ``(mu, P1, P2, P3)``, which go through the softplus
reparameterization and the bias offset. A small tanh network maps
``(mu, sigma, xi_u)`` to the point forecast, and the interval endpoints are
closed-form GEV quantiles.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from . import gev_torch, mbo
from ._io import load_npz, save_npz
from .gev import GevParams
from .loss import LossSpec, loss
from .mbo import BiasOffsets, DesiredParams
from .reparam import ConstrainedParams, DataBounds, RawHead, constrain

CHECKPOINT_FORMAT = "gevforecast-checkpoint/1"
DTYPE = torch.float64


class NonFiniteError(FloatingPointError):
    """Raised when activations or gradients stop being finite; names the layer."""


@dataclass
class EncoderConfig:
    input_width: int = 1
    hidden_width: int = 32
    layers: int = 2
    head_widths: tuple[int, ...] = (16, 16)
    seed: int = 0
    point_head: str = "fcn"  # or "mean": analytic GEV mean instead of the learned head
    quantiles: tuple[float, float] = (0.05, 0.95)

    def __post_init__(self) -> None:
        self.head_widths = tuple(int(w) for w in self.head_widths)
        self.quantiles = tuple(float(q) for q in self.quantiles)
        counts = (self.input_width, self.hidden_width, self.layers, *self.head_widths)
        if min(counts) < 1:
            raise ValueError(f"all layer counts and widths must be >= 1, got {counts}")
        if self.point_head not in ("fcn", "mean"):
            raise ValueError(f"unknown point head {self.point_head!r}")
        lo, hi = self.quantiles
        if not 0 < lo < hi < 1:
            raise ValueError(f"need 0 < p_L < p_U < 1, got {self.quantiles}")


@dataclass
class Forecast:
    params: ConstrainedParams
    yhat: torch.Tensor
    y_lo: torch.Tensor
    y_hi: torch.Tensor


def _finite(name: str, t: torch.Tensor) -> torch.Tensor:
    if not bool(torch.isfinite(t).all()):
        raise NonFiniteError(f"non-finite activations in layer '{name}'")
    return t


class GevForecaster(nn.Module):
    def __init__(self, config: EncoderConfig, bounds: DataBounds, offsets: BiasOffsets | None = None):
        super().__init__()
        self.config = config
        self.bounds = bounds
        self.offsets = offsets if offsets is not None else BiasOffsets()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            self.encoder = nn.LSTM(
                config.input_width,
                config.hidden_width,
                num_layers=config.layers,
                batch_first=True,
                dtype=DTYPE,
            )
            self.gev_head = nn.Linear(config.hidden_width, 4, dtype=DTYPE)
            widths = (3, *config.head_widths)
            layers: list[nn.Module] = []
            for a, b in zip(widths[:-1], widths[1:]):
                layers += [nn.Linear(a, b, dtype=DTYPE), nn.Tanh()]
            layers.append(nn.Linear(widths[-1], 1, dtype=DTYPE))
            self.point_net = nn.Sequential(*layers)

    def encode(self, x: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        """Last valid hidden state of the top layer.

        ``lengths`` marks how many leading steps of each window are real;
        anything after that is padding and cannot influence the result.
        """
        out, _ = self.encoder(x)
        _finite("encoder", out)
        if lengths is None:
            return out[:, -1]
        idx = (lengths.long() - 1).view(-1, 1, 1).expand(-1, 1, out.shape[-1])
        return out.gather(1, idx).squeeze(1)

    def raw_head(self, x: torch.Tensor, lengths: torch.Tensor | None = None) -> RawHead:
        r = _finite("gev_head", self.gev_head(self.encode(x, lengths)))
        return RawHead(r[:, 0], r[:, 1], r[:, 2], r[:, 3])

    def forward(self, x: torch.Tensor, lengths: torch.Tensor | None = None) -> Forecast:
        if x.shape[-1] != self.config.input_width:
            raise ValueError(f"expected {self.config.input_width} features per step, got {x.shape[-1]}")
        raw = self.raw_head(x, lengths)
        c = constrain(raw, self.bounds, location_offset=self.offsets.mu_bias)
        c = mbo.apply(c, self.offsets)
        if self.config.point_head == "fcn":
            feats = torch.stack([c.mu, c.sigma, c.xi_u], dim=-1)
            yhat = _finite("point_head", self.point_net(feats)).squeeze(-1)
        else:
            yhat = _finite("point_head", gev_torch.mean(c.mu, c.sigma, c.xi_u))
        p_lo, p_hi = self.config.quantiles
        y_lo = gev_torch.quantile(c.mu, c.sigma, c.xi_u, p_lo)
        y_hi = gev_torch.quantile(c.mu, c.sigma, c.xi_u, p_hi)
        return Forecast(c, yhat, y_lo, y_hi)

    @torch.no_grad()
    def capture_offsets(self, x: torch.Tensor, desired: DesiredParams | GevParams) -> BiasOffsets:
        """Freeze the bias offsets from one gradient-free pass over ``x``.

        The location bias is settled first because the shape interval depends
        on the (debiased) location; the remaining three are then measured at
        that location.
        """
        if isinstance(desired, GevParams):
            desired = DesiredParams.from_gev(desired)
        raw = self.raw_head(x)
        mu_bias = float(raw.mu_raw.mean()) - desired.mu
        initial = constrain(raw, self.bounds, location_offset=mu_bias)
        return mbo.capture(initial, desired, self.offsets)

    def weight_segments(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy().copy() for k, v in self.state_dict().items()}


def to_tensor(a) -> torch.Tensor:
    return torch.as_tensor(np.asarray(a, dtype=np.float64))


def gradients(model: GevForecaster, x, y, spec: LossSpec) -> dict[str, np.ndarray]:
    """Reverse-mode gradient of the training loss for every named weight."""
    model.zero_grad(set_to_none=True)
    out = model(to_tensor(x))
    parts = loss(out.params, out.yhat, to_tensor(y), spec)
    parts.total.backward()
    grads = {}
    for name, p in model.named_parameters():
        g = p.grad if p.grad is not None else torch.zeros_like(p)
        if not bool(torch.isfinite(g).all()):
            raise NonFiniteError(f"non-finite gradient in segment '{name}'")
        grads[name] = g.detach().numpy().copy()
    return grads


@dataclass
class Checkpoint:
    model: GevForecaster
    meta: dict = field(default_factory=dict)


def save_checkpoint(path, model: GevForecaster, **meta) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(model.config),
        "bounds": asdict(model.bounds),
        "offsets": model.offsets.to_dict(),
        **meta,
    }
    arrays = {f"w/{k}": v for k, v in model.weight_segments().items()}
    save_npz(path, arrays, header)


def load_checkpoint(path) -> Checkpoint:
    arrays, header = load_npz(path)
    if not header or header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    config = EncoderConfig(**header.pop("config"))
    bounds = DataBounds(**header.pop("bounds"))
    offsets = BiasOffsets(**header.pop("offsets"), frozen=True)
    model = GevForecaster(config, bounds, offsets)
    state = {k[2:]: torch.from_numpy(v) for k, v in arrays.items() if k.startswith("w/")}
    model.load_state_dict(state)
    header.pop("format")
    return Checkpoint(model, header)
