"""Rebuild the bundled HURDAT2 file from the NHC subset of IBTrACS.

The NOAA archive is not always reachable, so the North Atlantic and
East/Central Pacific best tracks (1980-2022) are taken from the WMO-agency
IBTrACS extract shipped in the ``huracanpy`` wheel and rewritten in the
HURDAT2 fixed-column text format. For those two basins the WMO agency is the
NHC, so wind values are the HURDAT2 values.

Usage::

    python scripts/build_hurdat2.py [--wheel path/to/huracanpy.whl] [--out data/...]
"""

from __future__ import annotations

import argparse
import gzip
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np
import pandas as pd

WHEEL_SPEC = "huracanpy==1.4.0"
MEMBER = "huracanpy/_data/_ibtracs_files/wmo.csv"
BASIN_PREFIX = {"NA": "AL", "EP": "EP"}


def _fetch_wheel(dest: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", WHEEL_SPEC, "--no-deps", "-q", "-d", str(dest)],
        check=True,
    )
    return next(dest.glob("huracanpy-*.whl"))


def _status(wind: float) -> str:
    if np.isnan(wind):
        return "TD"
    if wind >= 64:
        return "HU"
    if wind >= 34:
        return "TS"
    return "TD"


def _lat(v: float) -> str:
    return f"{abs(v):.1f}{'N' if v >= 0 else 'S'}"


def _lon(v: float) -> str:
    if v > 180:
        v -= 360
    return f"{abs(v):.1f}{'W' if v < 0 else 'E'}"


def to_hurdat2(df: pd.DataFrame) -> str:
    df = df[df["basin"].isin(BASIN_PREFIX)].copy()
    df["time"] = pd.to_datetime(df["time"])
    df = df.sort_values(["track_id", "time"])
    first = df.groupby("track_id").agg(t0=("time", "first"), basin=("basin", "first"))
    first = first.sort_values("t0")
    first["year"] = first["t0"].dt.year
    first["number"] = first.groupby(["basin", "year"]).cumcount() + 1

    out = io.StringIO()
    for track_id, meta in first.iterrows():
        rows = df[df["track_id"] == track_id]
        sid = f"{BASIN_PREFIX[meta['basin']]}{meta['number']:02d}{meta['year']:04d}"
        out.write(f"{sid},{'UNNAMED':>19},{len(rows):>7},\n")
        for r in rows.itertuples(index=False):
            t = r.time
            rec = "" if (t.hour % 6 == 0 and t.minute == 0) else "L"
            wind = -99 if np.isnan(r.wind) else int(round(r.wind))
            pres = -999 if np.isnan(r.slp) else int(round(r.slp))
            radii = "".join(f"{0:>6}," for _ in range(12))
            out.write(
                f"{t:%Y%m%d},{t:%H%M}".replace(",", ", ")
                + f",{rec:>2},{_status(r.wind):>3},{_lat(r.lat):>6},{_lon(r.lon):>7},"
                + f"{wind:>4},{pres:>5},{radii}{-999:>6},\n"
            )
    return out.getvalue()


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wheel", type=Path)
    ap.add_argument("--out", type=Path, default=Path("data/hurdat2_nhc_1980_2022.txt.gz"))
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or _fetch_wheel(Path(tmp))
        raw = zipfile.ZipFile(wheel).read(MEMBER)
    # "NA" is a basin code here, not a missing value
    df = pd.read_csv(io.BytesIO(raw), keep_default_na=False, na_values={"wind": [""], "slp": [""]})
    text = to_hurdat2(df)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    # mtime=0 keeps the archive byte-identical across rebuilds
    with open(args.out, "wb") as fh, gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
        gz.write(text.encode())
    print(f"wrote {args.out} ({text.count(chr(10))} lines)")


if __name__ == "__main__":
    main()
