"""Datasets of (predictor window, block maximum) pairs.

Sources are the synthetic covariate-driven GEV generator, HURDAT2 best-track
text and generic long-format CSV. Windows are split chronologically 7:2:1,
and predictors and targets are standardized with training-split statistics.
"""

from __future__ import annotations

import csv
import gzip
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import gev
from ._io import load_npz, save_npz
from .gev import GevParams
from .reparam import softplus

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
SPLIT_RATIOS = (0.7, 0.2, 0.1)
HURDAT2_MIN_RECORDS = 24
DATASET_FORMAT = "gevforecast-dataset/1"

# synthetic generator: shape squashed into this interval
SYNTH_XI_RANGE = (-0.4, 0.9)
SYNTH_DIM = 6


class EmptyDatasetError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class WindowSpec:
    """Predictor length ``alpha``, horizon ``beta`` and step between windows.

    ``stride`` defaults to ``alpha + beta`` (back-to-back, non-overlapping).
    """

    alpha: int
    beta: int
    stride: int | None = None
    allow_overlap: bool = False

    def __post_init__(self) -> None:
        if self.alpha < 1 or self.beta < 1:
            raise ValueError(f"alpha and beta must be >= 1, got {self.alpha}, {self.beta}")
        if self.step < 1:
            raise ValueError("stride must be >= 1")
        if self.step < self.length and not self.allow_overlap:
            raise ValueError(f"stride {self.step} overlaps windows of length {self.length}")

    @property
    def length(self) -> int:
        return self.alpha + self.beta

    @property
    def step(self) -> int:
        return self.stride if self.stride is not None else self.length


HURRICANE_WINDOWS = WindowSpec(alpha=16, beta=8)


@dataclass
class Series:
    entity: str
    values: np.ndarray  # (T, F)
    times: np.ndarray | None = None  # datetime64, (T,)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        self.values = v.reshape(-1, 1) if v.ndim == 1 else v

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class WindowedDataset:
    x_raw: np.ndarray  # (n, L, F)
    y_raw: np.ndarray  # (n,)
    split: np.ndarray  # (n,) of "train"/"val"/"test"
    entity: np.ndarray
    start: np.ndarray  # (n,) int64: epoch seconds when timed, else step index
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    target_col: int | None = 0
    spec: WindowSpec | None = None
    name: str = ""
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.y_raw)

    @property
    def x(self) -> np.ndarray:
        return (self.x_raw - self.x_mean) / self.x_std

    @property
    def y(self) -> np.ndarray:
        return (self.y_raw - self.y_mean) / self.y_std

    def mask(self, split: str) -> np.ndarray:
        if split not in SPLITS and split != "all":
            raise ValueError(f"unknown split {split!r}")
        return np.ones(len(self), bool) if split == "all" else self.split == split

    def arrays(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        m = self.mask(split)
        return self.x[m], self.y[m]

    @property
    def y_min(self) -> float:
        return float(self.y[self.mask("train")].min())

    @property
    def y_max(self) -> float:
        return float(self.y[self.mask("train")].max())

    def to_original(self, v):
        return np.asarray(v) * self.y_std + self.y_mean

    def params_to_original(self, p: GevParams) -> GevParams:
        return GevParams(
            np.asarray(p.mu) * self.y_std + self.y_mean, np.asarray(p.sigma) * self.y_std, p.xi
        )

    def use_statistics(self, x_mean, x_std, y_mean, y_std) -> None:
        """Replace standardization statistics (e.g. with those stored in a checkpoint)."""
        self.x_mean = np.asarray(x_mean, dtype=float)
        self.x_std = np.asarray(x_std, dtype=float)
        self.y_mean, self.y_std = float(y_mean), float(y_std)

    def statistics(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    def save(self, path) -> None:
        meta = {
            "format": DATASET_FORMAT,
            "name": self.name,
            "target_col": self.target_col,
            "spec": asdict(self.spec) if self.spec else None,
            "extra": self.extra,
            **self.statistics(),
        }
        save_npz(
            path,
            {
                "x_raw": self.x_raw,
                "y_raw": self.y_raw,
                "split": self.split.astype("U5"),
                "entity": self.entity.astype(str),
                "start": self.start,
            },
            meta,
        )

    @classmethod
    def load(cls, path) -> WindowedDataset:
        arrays, meta = load_npz(path)
        if not meta or meta.get("format") != DATASET_FORMAT:
            raise ValueError(f"{path} is not a {DATASET_FORMAT} file")
        spec = WindowSpec(**meta["spec"]) if meta["spec"] else None
        return cls(
            x_raw=arrays["x_raw"],
            y_raw=arrays["y_raw"],
            split=arrays["split"],
            entity=arrays["entity"],
            start=arrays["start"],
            x_mean=np.asarray(meta["x_mean"]),
            x_std=np.asarray(meta["x_std"]),
            y_mean=meta["y_mean"],
            y_std=meta["y_std"],
            target_col=meta["target_col"],
            spec=spec,
            name=meta["name"],
            extra=meta.get("extra", {}),
        )


def split_tags(n: int, ratios=SPLIT_RATIOS) -> np.ndarray:
    """Chronological tags for ``n`` time-ordered rows."""
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_val = min(n_val, n - n_train)
    tags = np.empty(n, dtype="U5")
    tags[:n_train] = "train"
    tags[n_train : n_train + n_val] = "val"
    tags[n_train + n_val :] = "test"
    return tags


def _stats(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def window(series: list[Series], spec: WindowSpec, *, target_col: int = 0, name: str = "") -> WindowedDataset:
    """Cut each series into predictor/target windows and split them in time order.

    The block maximum is taken on the raw scale from column ``target_col``.
    Targets are standardized with the training statistics of that same
    column so predictors and targets share units.
    """
    xs, ys, ents, starts = [], [], [], []
    for s in series:
        v = s.values
        for a in range(0, len(v) - spec.length + 1, spec.step):
            w = v[a : a + spec.length]
            if np.isnan(w).any():
                continue
            xs.append(w[: spec.alpha])
            ys.append(w[spec.alpha :, target_col].max())
            ents.append(s.entity)
            starts.append(int(s.times[a].astype("datetime64[s]").astype(np.int64)) if s.times is not None else a)
    if not xs:
        raise EmptyDatasetError(f"no series is long enough for windows of {spec.length} steps")

    order = sorted(range(len(xs)), key=lambda i: (starts[i], ents[i]))
    x_raw = np.stack([xs[i] for i in order]).astype(float)
    y_raw = np.array([ys[i] for i in order], dtype=float)
    tags = split_tags(len(order))
    x_mean, x_std = _stats(x_raw[tags == "train"].reshape(-1, x_raw.shape[-1]))
    return WindowedDataset(
        x_raw=x_raw,
        y_raw=y_raw,
        split=tags,
        entity=np.array([ents[i] for i in order]),
        start=np.array([starts[i] for i in order], dtype=np.int64),
        x_mean=x_mean,
        x_std=x_std,
        y_mean=float(x_mean[target_col]),
        y_std=float(x_std[target_col]),
        target_col=target_col,
        spec=spec,
        name=name,
    )


def persistence_forecast(ds: WindowedDataset) -> np.ndarray:
    """Largest observed target value in each predictor span (raw units)."""
    if ds.target_col is None:
        raise ValueError("persistence needs a dataset whose predictors include the target series")
    return ds.x_raw[:, :, ds.target_col].max(axis=1)


# --- synthetic data -------------------------------------------------------

# moments of exp(U) + U for U ~ Uniform(0, 1)
_PHI_MEAN = (math.e - 1.0) + 0.5
_PHI_VAR = (math.e**2 - 1.0) / 2.0 + 2.0 + 1.0 / 3.0 - _PHI_MEAN**2


@dataclass
class SyntheticTruth:
    x: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    xi: np.ndarray
    y: np.ndarray
    w_mu: np.ndarray
    w_sigma: np.ndarray
    w_xi: np.ndarray
    seed: int

    def params(self, mask=None) -> GevParams:
        m = slice(None) if mask is None else mask
        return GevParams(self.mu[m], self.sigma[m], self.xi[m])

    def save(self, path) -> None:
        arrays = {k: getattr(self, k) for k in ("x", "mu", "sigma", "xi", "y", "w_mu", "w_sigma", "w_xi")}
        save_npz(path, arrays, {"format": "gevforecast-truth/1", "seed": self.seed})

    @classmethod
    def load(cls, path) -> SyntheticTruth:
        arrays, meta = load_npz(path)
        return cls(**arrays, seed=int(meta["seed"]))


def _squash_xi(lin: np.ndarray, w: np.ndarray) -> np.ndarray:
    # centre and scale by the analytic mean/sd of w.phi(x) so the range is used evenly
    centre = w.sum() * _PHI_MEAN
    scale = np.linalg.norm(w) * math.sqrt(_PHI_VAR)
    lo, hi = SYNTH_XI_RANGE
    return (hi + lo) / 2 + (hi - lo) / 2 * np.tanh((lin - centre) / scale)


def generate_synthetic(n: int, seed: int) -> tuple[WindowedDataset, SyntheticTruth]:
    """Covariate-driven GEV draws.

    ``x ~ U[0,1]^6`` and with ``phi = exp(x) + x`` the parameters are
    ``mu = w_mu.phi``, ``sigma = softplus(w_sigma.phi)`` and ``xi`` a tanh
    squash of ``w_xi.phi`` into ``SYNTH_XI_RANGE``; weights are standard
    normal. Each row is one length-1 window with six features.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    w_mu, w_sigma, w_xi = rng.standard_normal((3, SYNTH_DIM))
    x = rng.random((n, SYNTH_DIM))
    phi = np.exp(x) + x
    mu = phi @ w_mu
    sigma = softplus(phi @ w_sigma)
    xi = _squash_xi(phi @ w_xi, w_xi)
    y = gev.sample(GevParams(mu, sigma, xi), n, rng)
    truth = SyntheticTruth(x, mu, sigma, xi, y, w_mu, w_sigma, w_xi, seed)

    tags = split_tags(n)
    x_mean, x_std = _stats(x[tags == "train"])
    y_mean, y_std = _stats(y[tags == "train"])
    ds = WindowedDataset(
        x_raw=x[:, None, :],
        y_raw=y,
        split=tags,
        entity=np.full(n, "synthetic"),
        start=np.arange(n, dtype=np.int64),
        x_mean=x_mean,
        x_std=x_std,
        y_mean=float(y_mean),
        y_std=float(y_std),
        target_col=None,
        spec=None,
        name=f"synthetic-{seed}",
    )
    return ds, truth


# --- ingestion -------------------------------------------------------------

_HURDAT_ID = re.compile(r"^[A-Z]{2}\d{6}$")


def _open_text(path):
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def is_hurdat2(path) -> bool:
    try:
        with _open_text(path) as fh:
            first = fh.readline()
    except (OSError, UnicodeDecodeError):
        return False
    return bool(_HURDAT_ID.match(first.split(",")[0].strip()))


def _interpolate_gaps(values: np.ndarray) -> np.ndarray:
    """Linearly fill interior NaNs; leading/trailing NaNs are left for the caller to trim."""
    v = values.copy()
    ok = ~np.isnan(v)
    if ok.sum() >= 2:
        idx = np.arange(len(v))
        first, last = idx[ok][0], idx[ok][-1]
        inner = slice(first, last + 1)
        v[inner] = np.interp(idx[inner], idx[ok], v[ok])
    return v


def _trim(values: np.ndarray, times: np.ndarray | None):
    ok = ~np.isnan(values).any(axis=1) if values.ndim == 2 else ~np.isnan(values)
    if not ok.any():
        return values[:0], None if times is None else times[:0]
    idx = np.flatnonzero(ok)
    sl = slice(idx[0], idx[-1] + 1)
    return values[sl], None if times is None else times[sl]


def ingest_hurdat2(path, *, min_records: int = HURDAT2_MIN_RECORDS, synoptic_only: bool = True) -> list[Series]:
    """Per-storm 6-hourly maximum sustained wind (knots) from a HURDAT2 file.

    Off-synoptic records (landfall points and the like) are dropped, interior
    missing winds (``-99``) are interpolated, and storms left with fewer
    than ``min_records`` records are excluded.

    Raises:
        ParseError: on a malformed header or data line, with its line number.
    """
    storms: list[Series] = []
    n_seen = 0
    with _open_text(path) as fh:
        lineno = 0

        def next_line():
            nonlocal lineno
            lineno += 1
            return fh.readline()

        while True:
            header = next_line()
            if not header:
                break
            if not header.strip():
                continue
            parts = [p.strip() for p in header.split(",")]
            if len(parts) < 3 or not _HURDAT_ID.match(parts[0]) or not parts[2].isdigit():
                raise ParseError(path, lineno, f"expected storm header, got {header.strip()!r}")
            storm_id, count = parts[0], int(parts[2])
            times, winds = [], []
            for _ in range(count):
                line = next_line()
                if not line:
                    raise ParseError(path, lineno, f"file ended inside storm {storm_id}")
                f = [p.strip() for p in line.split(",")]
                if len(f) < 8:
                    raise ParseError(path, lineno, f"expected at least 8 fields, got {len(f)}")
                date, hhmm, wind = f[0], f[1], f[6]
                try:
                    t = datetime.strptime(date + hhmm.zfill(4), "%Y%m%d%H%M")
                    w = int(wind)
                except ValueError as exc:
                    raise ParseError(path, lineno, f"bad date/time/wind: {exc}") from None
                if synoptic_only and (t.minute != 0 or t.hour % 6 != 0):
                    continue
                times.append(np.datetime64(t, "s"))
                winds.append(np.nan if w < 0 else float(w))
            n_seen += 1
            t_arr = np.array(times, dtype="datetime64[s]")
            t_arr, first = np.unique(t_arr, return_index=True)
            w_arr = _interpolate_gaps(np.array(winds, dtype=float)[first])
            w_arr, t_arr = _trim(w_arr, t_arr)
            if len(w_arr) >= min_records:
                storms.append(Series(storm_id, w_arr, t_arr))
    log.info("HURDAT2 %s: kept %d of %d storms with >= %d records", path, len(storms), n_seen, min_records)
    return storms


@dataclass(frozen=True)
class CsvSchema:
    time_col: str = "timestamp"
    value_cols: tuple[str, ...] = ("value",)
    entity_col: str | None = None
    delimiter: str = ","
    gap_policy: str = "interpolate"  # or "drop"


def _parse_time(s: str):
    try:
        return np.datetime64(datetime.fromisoformat(s.strip()), "s")
    except ValueError:
        return np.datetime64(int(float(s)), "s")


def _parse_value(s: str) -> float:
    s = s.strip()
    if s == "" or s.lower() in ("na", "nan", "null"):
        return np.nan
    return float(s)


def ingest_csv(path, schema: CsvSchema = CsvSchema()) -> list[Series]:
    """One time-sorted series per entity from a long-format CSV file.

    Raises:
        ParseError: listing how many rows failed and the first offender.
    """
    if schema.gap_policy not in ("interpolate", "drop"):
        raise ValueError(f"unknown gap policy {schema.gap_policy!r}")
    rows: dict[str, list] = {}
    bad: list[tuple[int, str]] = []
    with _open_text(path) as fh:
        reader = csv.DictReader(fh, delimiter=schema.delimiter)
        needed = [schema.time_col, *schema.value_cols] + ([schema.entity_col] if schema.entity_col else [])
        missing = [c for c in needed if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(path, 1, f"missing columns {missing}")
        for rec in reader:
            try:
                t = _parse_time(rec[schema.time_col])
                v = [_parse_value(rec[c]) for c in schema.value_cols]
            except (ValueError, TypeError, AttributeError):
                bad.append((reader.line_num, schema.delimiter.join(str(x) for x in rec.values())))
                continue
            ent = rec[schema.entity_col] if schema.entity_col else "series"
            rows.setdefault(ent, []).append((t, v))
    if bad:
        lineno, text = bad[0]
        raise ParseError(path, lineno, f"{len(bad)} unparseable rows; first: {text!r}")

    out = []
    for ent, recs in rows.items():
        recs.sort(key=lambda r: r[0])
        times = np.array([r[0] for r in recs], dtype="datetime64[s]")
        values = np.array([r[1] for r in recs], dtype=float)
        if schema.gap_policy == "drop":
            ok = ~np.isnan(values).any(axis=1)
            times, values = times[ok], values[ok]
        else:
            values = np.column_stack([_interpolate_gaps(values[:, j]) for j in range(values.shape[1])])
            values, times = _trim(values, times)
        out.append(Series(ent, values, times))
    return out


def load_dataset(path, spec: WindowSpec | None = None, schema: CsvSchema | None = None) -> WindowedDataset:
    """Open a cached dataset, or window a HURDAT2/CSV file with ``spec``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    if path.suffix == ".npz":
        ds = WindowedDataset.load(path)
        if spec is not None and ds.spec is not None and ds.spec != spec:
            raise ValueError(f"dataset windows {ds.spec} do not match requested {spec}")
        return ds
    spec = spec or HURRICANE_WINDOWS
    if is_hurdat2(path):
        return window(ingest_hurdat2(path), spec, name=path.name)
    return window(ingest_csv(path, schema or CsvSchema()), spec, name=path.name)
