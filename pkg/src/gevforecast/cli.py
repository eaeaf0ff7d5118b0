"""Command-line entry point: ``gevforecast {synth,train,eval,sweep}``.

Set ``EXTREMA_LOG`` (e.g. ``DEBUG``) to change the log level. Timestamped
log lines go to ``run.log`` in the output directory; every other output is
a pure function of the inputs and the seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import data, metrics, pipeline
from .config import RunConfig
from .data import WindowSpec
from .gev import GevParams
from .global_fit import FitResult
from .net import load_checkpoint, save_checkpoint

log = logging.getLogger("gevforecast")


class ConfigError(ValueError):
    pass


def _setup_logging(out_dir: Path | None) -> None:
    level = getattr(logging, os.environ.get("EXTREMA_LOG", "INFO").upper(), logging.INFO)
    root = logging.getLogger()
    root.setLevel(level)
    for h in list(root.handlers):
        if getattr(h, "_gevforecast", False):
            root.removeHandler(h)
            h.close()
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(out_dir / "run.log", mode="w"))
    for h in handlers:
        h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        h._gevforecast = True  # type: ignore[attr-defined]
        root.addHandler(h)


def _floats(s: str) -> list[float]:
    vals = [float(v) for v in s.split(",") if v.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    return vals


def _ints(s: str) -> list[int]:
    return [int(v) for v in _floats(s)]


def _quantiles(s: str) -> tuple[float, float]:
    vals = _floats(s)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("--quantiles takes two probabilities, e.g. 0.05,0.95")
    return vals[0], vals[1]


def _effective_config(args, **extra) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    return cfg.override(
        seed=args.seed,
        lambda2=args.lambda2,
        tau=args.tau,
        alpha=args.alpha,
        beta=args.beta,
        quantiles=args.quantiles,
        **extra,
    )


def _load(path, cfg: RunConfig) -> data.WindowedDataset:
    return data.load_dataset(path, cfg.window_spec)


def _echo(path: Path, cfg: dict) -> None:
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


# --- commands --------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    out = Path(args.out)
    _setup_logging(out)
    ds, truth = data.generate_synthetic(args.n, args.seed)
    ds.save(out / "dataset.npz")
    truth.save(out / "truth.npz")
    _echo(out / "config.json", {"command": "synth", "n": args.n, "seed": args.seed})
    log.info("wrote %d synthetic windows to %s", args.n, out)
    return 0


def _train_one(ds, cfg: RunConfig, out: Path | None):
    result = pipeline.run(ds, cfg)
    if out is not None:
        fit = result.fit
        save_checkpoint(
            out / "checkpoint.npz",
            result.model,
            statistics=ds.statistics(),
            window=None if ds.spec is None else {"alpha": ds.spec.alpha, "beta": ds.spec.beta, "stride": ds.spec.stride},
            global_fit={"mu": fit.params.mu, "sigma": fit.params.sigma, "xi": fit.params.xi, "nll": fit.nll},
            run_config=cfg.to_dict(),
            best_epoch=result.report.best_epoch,
            best_val_total=result.report.best.val_total,
        )
        result.report.write_csv(out / "train_report.csv")
        cfg.write(out / "config.json")
        (out / "global_fit.json").write_text(
            json.dumps(
                {
                    "mu": fit.params.mu,
                    "sigma": fit.params.sigma,
                    "xi": fit.params.xi,
                    "nll": fit.nll,
                    "converged": fit.converged,
                    "iterations": fit.iterations,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
    return result


def cmd_train(args) -> int:
    out = Path(args.out)
    _setup_logging(out)
    cfg = _effective_config(args, lambda1=args.lambda1)
    ds = _load(args.data, cfg)
    result = _train_one(ds, cfg, out)
    log.info("best epoch %d, val total %.10g", result.report.best_epoch, result.report.best.val_total)
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    _setup_logging(out)
    ck = load_checkpoint(args.checkpoint)
    model, meta = ck.model, ck.meta
    window = meta.get("window")
    spec = WindowSpec(**window) if window else None
    if spec is not None and (
        (args.alpha is not None and args.alpha != spec.alpha) or (args.beta is not None and args.beta != spec.beta)
    ):
        raise ConfigError(f"window flags do not match the checkpoint ({spec})")
    ds = data.load_dataset(args.data, spec)
    if (ds.spec is None) != (spec is None):
        raise ConfigError("dataset windowing does not match the checkpoint")
    if ds.x_raw.shape[-1] != model.config.input_width:
        raise ConfigError(
            f"dataset has {ds.x_raw.shape[-1]} features per step, checkpoint expects {model.config.input_width}"
        )
    stats = meta["statistics"]
    ds.use_statistics(stats["x_mean"], stats["x_std"], stats["y_mean"], stats["y_std"])
    if args.quantiles is not None:
        model.config.quantiles = tuple(args.quantiles)

    result, table = metrics.evaluate(model, ds, args.split)
    g = meta["global_fit"]
    fit = FitResult(GevParams(g["mu"], g["sigma"], g["xi"]), g["nll"], True, 0, ds.y_min, ds.y_max)
    truth = data.SyntheticTruth.load(args.truth) if args.truth else None
    result["nll_comparison"] = metrics.comparison_dict(metrics.nll_comparison(ds, model, fit, truth, args.split))
    if ds.target_col is not None:
        pers = data.persistence_forecast(ds)[ds.mask(args.split)]
        result["persistence_rmse"] = metrics.rmse(pers, table.y)
        result["persistence_pearson"] = metrics.pearson(pers, table.y)
    metrics.write_metrics(out, Path(args.checkpoint).parent.name or "run", result)
    if args.sort == "block-max":
        table = table.sorted_by_block_max()
    table.write_csv(out / "forecasts.csv")
    _echo(
        out / "config.json",
        {
            "command": "eval",
            "checkpoint": str(args.checkpoint),
            "split": args.split,
            "sort": args.sort,
            "quantiles": list(model.config.quantiles),
            "run_config": meta.get("run_config"),
        },
    )
    log.info("rmse %.4f pearson %.4f coverage %.3f", result["rmse"], result["pearson"], result["coverage"])
    return 0


def _sweep_job(job):
    data_path, cfg = job
    ds = _load(data_path, cfg)
    result = pipeline.run(ds, cfg)
    m = pipeline.split_metrics(result, ds)
    return {
        "lambda1": cfg.lambda1,
        "seed": cfg.seed,
        "rmse": m["rmse"],
        "pearson": m["pearson"],
        "coverage": m["coverage"],
        "best_epoch": result.report.best_epoch,
        "val_total": result.report.best.val_total,
    }


def cmd_sweep(args) -> int:
    out = Path(args.out)
    _setup_logging(out)
    base = _effective_config(args)
    jobs = [(args.data, base.override(lambda1=lam, seed=s)) for lam in args.lambda1 for s in args.seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]

    with open(out / "sweep_runs.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    with open(out / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda1", "runs", "median_rmse", "median_pearson"])
        for lam in args.lambda1:
            sel = [r for r in rows if r["lambda1"] == lam]
            w.writerow(
                [lam, len(sel), statistics.median(r["rmse"] for r in sel), statistics.median(r["pearson"] for r in sel)]
            )
    base.write(out / "config.json")
    return 0


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gevforecast", description="Block-maximum forecasting with per-window GEV parameters.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data_required=True):
        sp.add_argument("--data", required=data_required, help="dataset .npz, HURDAT2 text (.txt/.gz) or CSV")
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--lambda2", type=float)
        sp.add_argument("--tau", type=float)
        sp.add_argument("--alpha", type=int, help="predictor steps per window")
        sp.add_argument("--beta", type=int, help="forecast horizon in steps")
        sp.add_argument("--quantiles", type=_quantiles, help="lower,upper probabilities")

    s = sub.add_parser("synth", help="generate the synthetic covariate-driven GEV dataset")
    s.add_argument("--n", type=int, default=8192)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="global fit, offset capture, training, checkpoint")
    common(t)
    t.add_argument("--lambda1", type=float)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="metrics and per-window forecast table")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", default="test", choices=[*data.SPLITS, "all"])
    e.add_argument("--sort", default="none", choices=["none", "block-max"])
    e.add_argument("--truth", help="synthetic truth .npz for the ground-truth NLL")
    e.add_argument("--alpha", type=int)
    e.add_argument("--beta", type=int)
    e.add_argument("--quantiles", type=_quantiles)
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="lambda1 ablation over several seeds")
    common(w)
    w.add_argument("--lambda1", type=_floats, required=True, help="comma-separated values")
    w.add_argument("--seeds", type=_ints, default=[0, 1, 2])
    w.add_argument("--jobs", type=int, default=1)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
