"""Training loop, evaluation, prediction and curve/report output."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import dataset as ds
from .checkpoint import save_checkpoint
from .errors import ConfigError, DataError, DivergenceError
from .market_data import N_FEATURES, TickerSeries
from .nn import functional as F
from .nn.model import Model, build_model, decay_names, default_architecture
from .optim import make_optimizer
from .rng import Prng

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("epoch", "iteration", "train_loss", "train_acc", "val_acc")


@dataclass(frozen=True)
class TrainConfig:
    window_len: int = 256
    horizon: int = 1
    stride: int = 1
    batch_size: int = 250
    learning_rate: float = 1e-3
    keep_prob: float = 0.6
    epochs: int = 100
    optimizer: str = "adam"
    weight_decay: float = 0.0
    seed: int = 1
    train_frac: float = 0.7
    val_frac: float = 0.15
    arch_scale: float = 1.0
    chronological_split: bool = False

    def __post_init__(self):
        ints = ("window_len", "horizon", "stride", "batch_size", "epochs", "seed")
        for name in ints:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        for name in ("learning_rate", "keep_prob", "weight_decay", "train_frac", "val_frac", "arch_scale"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                raise ConfigError(f"{name} must be a finite number, got {value!r}")
        if self.window_len < 2:
            raise ConfigError("window_len must be >= 2")
        for name in ("horizon", "stride", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 < self.seed < 2 ** 64:
            raise ConfigError("seed must be a nonzero unsigned 64-bit integer")
        if self.learning_rate <= 0 or self.arch_scale <= 0:
            raise ConfigError("learning_rate and arch_scale must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not 0 < self.keep_prob <= 1:
            raise ConfigError("keep_prob must be in (0, 1]")
        if not (self.train_frac > 0 and self.val_frac > 0 and self.train_frac + self.val_frac < 1):
            raise ConfigError("need train_frac > 0, val_frac > 0 and train_frac + val_frac < 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not isinstance(self.chronological_split, bool):
            raise ConfigError("chronological_split must be true or false")

    @classmethod
    def from_dict(cls, obj: dict) -> TrainConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def architecture(self, channels: int = N_FEATURES):
        return default_architecture(self.window_len, channels, self.arch_scale, self.keep_prob)


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    iteration: int
    train_loss: float
    train_acc: float
    val_acc: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Metrics:
    """Loss and accuracy plus BUY-positive confusion counts over a sample set."""

    loss: float
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"loss": self.loss, "accuracy": self.accuracy, "n": self.n,
                "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass
class TrainReport:
    rows: list[EpochMetrics] = field(default_factory=list)
    test: Metrics | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "epochs": [r.to_dict() for r in self.rows],
            "test": None if self.test is None else self.test.to_dict(),
        }


@dataclass
class TrainResult:
    model: Model
    report: TrainReport
    optimizer: object
    config: TrainConfig

    @property
    def iteration(self) -> int:
        return self.report.rows[-1].iteration if self.report.rows else 0

    def save(self, path) -> None:
        """Checkpoint with everything needed to resume this run."""
        save_checkpoint(
            path, self.model, self.optimizer.state_dict(), self.optimizer.name,
            config=self.config.to_dict(),
            progress={"epoch": len(self.report.rows), "iteration": self.iteration,
                      "rows": [r.to_dict() for r in self.report.rows]},
        )


def evaluate(model: Model, samples: Sequence[ds.WindowSample], chunk_size: int = 256) -> Metrics:
    """Eval-mode metrics. Prediction is the argmax logit, ties going to SELL (class 0).

    Results do not depend on ``chunk_size`` or sample order: per-sample losses
    are summed with ``math.fsum``.
    """
    if not samples:
        raise DataError("no samples to evaluate")
    losses, preds, labels = [], [], []
    for i in range(0, len(samples), chunk_size):
        x, y = ds.stack(samples[i:i + chunk_size])
        logits = model.logits(x)
        logp = F.log_softmax(logits)
        losses.append(-logp[np.arange(len(y)), y])
        preds.append(np.argmax(logits, axis=1))
        labels.append(y)
    loss_vec = np.concatenate(losses)
    pred = np.concatenate(preds)
    y = np.concatenate(labels)
    n = len(y)
    tp = int(np.sum((pred == ds.BUY) & (y == ds.BUY)))
    fp = int(np.sum((pred == ds.BUY) & (y == ds.SELL)))
    tn = int(np.sum((pred == ds.SELL) & (y == ds.SELL)))
    fn = int(np.sum((pred == ds.SELL) & (y == ds.BUY)))
    return Metrics(math.fsum(loss_vec.tolist()) / n, (tp + tn) / n, tp, fp, tn, fn)


def _check_window(model: Model, samples: Sequence[ds.WindowSample]) -> None:
    expected = (model.spec.window_len, model.spec.input_channels)
    for s in samples[:1]:
        if s.matrix.shape != expected:
            raise DataError(f"window mismatch: model expects window {expected[0]} x {expected[1]} channels, "
                            f"data has window {s.matrix.shape[0]} x {s.matrix.shape[1]} channels")


def train(config: TrainConfig, data: ds.SplitDataset, resume: dict | None = None,
          on_epoch: Callable[[EpochMetrics], None] | None = None) -> TrainResult:
    """Run (or continue) a deterministic training run.

    PRNG use, in order: model init from ``Prng(seed)``; a fresh
    ``Prng(seed ^ (epoch + 1) * golden)`` per epoch for batch order; dropout
    masks continue the init generator. ``resume`` is the dict returned by
    :func:`load_checkpoint` for a checkpoint saved by :meth:`TrainResult.save`.
    """
    if not data.train or not data.val:
        raise DataError(f"need non-empty train and val splits (got {len(data.train)} / {len(data.val)})")
    optimizer = make_optimizer(config.optimizer, config.learning_rate)
    report = TrainReport(config=config.to_dict())
    if resume is None:
        channels = data.train[0].matrix.shape[1]
        model = build_model(config.architecture(channels), Prng(config.seed))
        iteration = 0
    else:
        model, iteration = _restore(config, resume, optimizer, report)
    _check_window(model, data.train)

    decay = decay_names(model.spec)
    for epoch in range(len(report.rows), config.epochs):
        loss_sum, seen = 0.0, 0
        for batch in ds.batches(data.train, config.batch_size, epoch, config.seed, drop_small=True):
            x, y = ds.stack(batch)
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads, _ = model.loss_and_grads(x, y)
            if not math.isfinite(loss):
                raise DivergenceError(iteration + 1, loss)
            if config.weight_decay:
                for name in decay:
                    grads[name] = grads[name] + config.weight_decay * model.params[name]
            if not all(np.isfinite(g).all() for g in grads.values()):
                raise DivergenceError(iteration + 1, loss, "gradient")
            optimizer.step(model.params, grads)
            iteration += 1
            if not all(np.isfinite(model.params[n]).all() for n in grads):
                raise DivergenceError(iteration, loss, "parameters")
            loss_sum += loss * len(batch)
            seen += len(batch)
        if seen == 0:
            raise DataError("training split too small to form a batch of 2")
        with np.errstate(over="ignore", invalid="ignore"):
            train_eval, val_eval = evaluate(model, data.train), evaluate(model, data.val)
        if not (math.isfinite(train_eval.loss) and math.isfinite(val_eval.loss)):
            raise DivergenceError(iteration, loss_sum / seen, "eval-mode logits")
        row = EpochMetrics(
            epoch=epoch + 1,
            iteration=iteration,
            train_loss=loss_sum / seen,
            train_acc=train_eval.accuracy,
            val_acc=val_eval.accuracy,
        )
        report.rows.append(row)
        log.info("epoch %d iter %d loss %.5f train_acc %.4f val_acc %.4f",
                 row.epoch, row.iteration, row.train_loss, row.train_acc, row.val_acc)
        if on_epoch is not None:
            on_epoch(row)
    if data.test:
        report.test = evaluate(model, data.test)
    return TrainResult(model, report, optimizer, config)


def _restore(config: TrainConfig, ckpt: dict, optimizer, report: TrainReport) -> tuple[Model, int]:
    saved = ckpt.get("config")
    progress = ckpt.get("progress")
    if saved is None or progress is None or ckpt.get("optim") is None:
        raise ConfigError("checkpoint has no training state to resume from")
    mine = config.to_dict()
    diff = sorted(k for k in mine if k != "epochs" and saved.get(k) != mine[k])
    if diff:
        raise ConfigError(f"resume config differs from checkpoint in: {', '.join(diff)}")
    if ckpt["optim"]["name"] != optimizer.name:
        raise ConfigError("checkpoint optimizer does not match config")
    if progress["epoch"] > config.epochs:
        raise ConfigError(f"checkpoint is at epoch {progress['epoch']}, beyond epochs={config.epochs}")
    optimizer.load_state_dict(ckpt["optim"])
    report.rows.extend(EpochMetrics(**r) for r in progress["rows"])
    return ckpt["model"], int(progress["iteration"])


@dataclass(frozen=True)
class SignalPrediction:
    symbol: str
    date: object
    p_bearish: float
    p_bullish: float

    @property
    def signal(self) -> str:
        return signal_for(self.p_bullish)

    def to_dict(self) -> dict:
        return {"symbol": self.symbol, "date": str(self.date), "signal": self.signal,
                "p_bullish": self.p_bullish, "p_bearish": self.p_bearish}


def signal_for(p_bullish: float) -> str:
    return "BUY" if p_bullish > 0.5 else "SELL"


def predict(model: Model, series: TickerSeries) -> SignalPrediction:
    """Signal for the most recent ``window_len`` bars of ``series``."""
    w = model.spec.window_len
    if len(series) < w:
        raise DataError(f"series too short ({len(series)} < {w})")
    window = ds.normalize_window(series.features[-w:])
    if window.shape[1] != model.spec.input_channels:
        raise DataError(f"model expects {model.spec.input_channels} channels, series has {window.shape[1]}")
    proba = model.predict_proba(window.T[None])[0]
    return SignalPrediction(series.symbol, series.dates[-1], float(proba[0]), float(proba[1]))


def write_curves(rows: Sequence[EpochMetrics], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for r in rows:
            w.writerow([r.epoch, r.iteration, f"{r.train_loss:.6g}", f"{r.train_acc:.6g}", f"{r.val_acc:.6g}"])


def read_curves(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise DataError(f"{path}: unexpected curves header {reader.fieldnames}")
        return [{k: float(v) for k, v in row.items()} for row in reader]


def make_split(config: TrainConfig, samples: Sequence[ds.WindowSample]) -> ds.SplitDataset:
    """Shuffled split, or with ``chronological_split`` a cut in label-date order."""
    if config.chronological_split:
        samples = sorted(samples, key=lambda s: (s.label_date, s.symbol))
    return ds.split_shuffle(samples, config.train_frac, config.val_frac, config.seed,
                            shuffle=not config.chronological_split)


def output_paths(out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    return {"checkpoint": out / "checkpoint.json", "curves": out / "curves.csv", "report": out / "report.json"}
