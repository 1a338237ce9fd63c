"""Command-line interface: ``stockcnn {prepare,train,evaluate,predict}``.

Exit status: 0 success, 2 configuration error, 3 data error, 4 numerical
divergence during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset as ds
from .checkpoint import load_checkpoint, write_json_atomic
from .errors import ConfigError, DataError, DivergenceError
from .market_data import load_series
from .trainer import (TrainConfig, evaluate, make_split, output_paths, predict, train,
                      write_curves)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4

RUN_KEYS = {"input_csv", "output_dir", "manifest", "lenient"}

log = logging.getLogger("stockcnn")


def _load_inputs(paths, lenient):
    """Series per input file, plus one summary dict per file."""
    out = []
    for path in paths:
        try:
            series, diags = load_series(path, lenient=lenient)
        except FileNotFoundError:
            raise DataError(f"input file not found: {path}") from None
        for d in diags:
            log.warning("%s: skipped row %d: %s", path, d.line, d.reason)
        out.append((series, len(series) + len(diags), len(diags)))
    symbols = [s.symbol for s, _, _ in out]
    if len(set(symbols)) != len(symbols):
        raise DataError(f"duplicate ticker symbols among inputs: {symbols}")
    return out


def cmd_prepare(args) -> int:
    loaded = _load_inputs(args.input, args.lenient)
    samples = []
    print("symbol,bars_read,rows_rejected,windows")
    for series, n_read, n_rejected in loaded:
        windows = ds.prepare_samples(series, args.window, args.horizon, args.stride)
        samples += windows
        print(f"{series.symbol},{n_read},{n_rejected},{len(windows)}")
    if not samples:
        raise DataError(f"no valid windows: every series is shorter than window + horizon "
                        f"({args.window} + {args.horizon})")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds.write_manifest(samples, out / "manifest.csv")
    sell, buy = ds.class_balance(samples)
    print(f"total: {len(samples)} windows, {buy} BUY / {sell} SELL")
    split = ds.split_shuffle(samples, seed=args.seed)
    print(f"split (seed {args.seed}): train {len(split.train)}, val {len(split.val)}, test {len(split.test)}")
    print(f"manifest written to {out / 'manifest.csv'}")
    return EXIT_OK


def _read_run_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    run = {k: raw.pop(k) for k in list(raw) if k in RUN_KEYS}
    config = TrainConfig.from_dict(raw)
    inputs = run.get("input_csv")
    if inputs is None:
        raise ConfigError("config needs input_csv (a path or a list of paths)")
    if isinstance(inputs, str):
        inputs = [inputs]
    if not inputs or not all(isinstance(p, str) for p in inputs):
        raise ConfigError("input_csv must be a path or a non-empty list of paths")
    run["input_csv"] = inputs
    run.setdefault("output_dir", ".")
    run["lenient"] = bool(run.get("lenient", False))
    return config, run


def _training_samples(config, run):
    loaded = _load_inputs(run["input_csv"], run["lenient"])
    if run.get("manifest"):
        rows = ds.read_manifest(run["manifest"])
        samples = ds.samples_from_manifest(rows, {s.symbol: s for s, _, _ in loaded}, config.window_len)
    else:
        samples = [w for s, _, _ in loaded
                   for w in ds.prepare_samples(s, config.window_len, config.horizon, config.stride)]
    if not samples:
        raise DataError(f"no valid windows for window_len={config.window_len}, horizon={config.horizon}")
    return samples


def cmd_train(args) -> int:
    config, run = _read_run_config(args.config)
    resume = load_checkpoint(args.resume) if args.resume else None
    data = make_split(config, _training_samples(config, run))
    log.info("split: train %d, val %d, test %d", len(data.train), len(data.val), len(data.test))
    result = train(config, data, resume=resume)

    paths = output_paths(run["output_dir"])
    paths["checkpoint"].parent.mkdir(parents=True, exist_ok=True)
    result.save(paths["checkpoint"])
    write_curves(result.report.rows, paths["curves"])
    report = result.report.to_dict()
    report["run"] = {"input_csv": run["input_csv"], "output_dir": run["output_dir"],
                     "manifest": run.get("manifest"), "lenient": run["lenient"],
                     "resumed_from": args.resume,
                     "split": {"train": len(data.train), "val": len(data.val), "test": len(data.test)}}
    write_json_atomic(report, paths["report"])
    last = result.report.rows[-1]
    print(f"epochs {last.epoch}, iterations {last.iteration}, train_loss {last.train_loss:.6g}, "
          f"train_acc {last.train_acc:.6g}, val_acc {last.val_acc:.6g}")
    if result.report.test is not None:
        _print_metrics("test", result.report.test)
    else:
        print("test: no samples")
    return EXIT_OK


def _print_metrics(label, m):
    print(f"{label}: n={m.n} loss={m.loss:.6g} accuracy={m.accuracy:.6g} "
          f"TP={m.tp} FP={m.fp} TN={m.tn} FN={m.fn}")


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.model)
    model = ckpt["model"]
    saved = ckpt.get("config") or {}
    horizon = args.horizon if args.horizon is not None else saved.get("horizon", 1)
    window = args.window if args.window is not None else model.spec.window_len
    if window != model.spec.window_len:
        raise DataError(f"window mismatch: checkpoint expects window {model.spec.window_len}, data has {window}")
    samples = [w for s, _, _ in _load_inputs(args.input, args.lenient)
               for w in ds.prepare_samples(s, window, horizon, args.stride)]
    if not samples:
        raise DataError("no samples: inputs are shorter than window + horizon")
    if samples[0].matrix.shape[1] != model.spec.input_channels:
        raise DataError(f"channel mismatch: checkpoint expects {model.spec.input_channels}, "
                        f"data has {samples[0].matrix.shape[1]}")
    metrics = evaluate(model, samples)
    _print_metrics("evaluate", metrics)
    report = {"model": str(args.model), "input_csv": list(args.input), "horizon": horizon,
              "window_len": window, "stride": args.stride, **metrics.to_dict()}
    write_json_atomic(report, Path(args.out) / "evaluation.json")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_checkpoint(args.model)["model"]
    for series, _, _ in _load_inputs(args.input, args.lenient):
        pred = predict(model, series)
        if args.json:
            print(json.dumps(pred.to_dict()))
        else:
            print(f"{pred.symbol},{pred.signal},{pred.p_bullish!r},{pred.p_bearish!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stockcnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate CSVs and write a window manifest")
    p.add_argument("--input", nargs="+", required=True, metavar="CSV")
    p.add_argument("--window", type=int, default=256)
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=".")
    p.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", metavar="CHECKPOINT")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on labelled windows from CSVs")
    p.add_argument("--model", required=True, metavar="CHECKPOINT")
    p.add_argument("--input", nargs="+", required=True, metavar="CSV")
    p.add_argument("--horizon", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", default=".")
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="BUY/SELL signal for the latest window of each CSV")
    p.add_argument("--model", required=True, metavar="CHECKPOINT")
    p.add_argument("--input", nargs="+", required=True, metavar="CSV")
    p.add_argument("--json", action="store_true")
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
