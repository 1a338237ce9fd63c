"""Sliding-window samples, labels, normalization, splits and batching."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .market_data import ADJ_CLOSE_SLOT, TickerSeries
from .rng import Prng, epoch_seed

SELL, BUY = 0, 1
MANIFEST_COLUMNS = ("symbol", "start_date", "end_date", "label_date", "label")


@dataclass(eq=False)
class WindowSample:
    """A ``[W, C]`` window of feature bars with its BUY/SELL label.

    ``matrix`` is time-major (one row per day), matching the external
    ``[batch, window, channels]`` layout.
    """

    matrix: np.ndarray
    label: int
    symbol: str
    start_date: dt.date
    end_date: dt.date
    label_date: dt.date

    @property
    def key(self) -> tuple[str, dt.date, dt.date]:
        return (self.symbol, self.start_date, self.label_date)


@dataclass
class SplitDataset:
    train: list[WindowSample]
    val: list[WindowSample]
    test: list[WindowSample]
    seed: int
    fractions: tuple[float, float]


def label_for(series: TickerSeries, end_index: int, horizon: int) -> int:
    """BUY (1) iff adjusted close rises strictly over ``horizon`` rows after ``end_index``."""
    if end_index < 0 or horizon < 1 or end_index + horizon > len(series) - 1:
        raise IndexError(
            f"label needs rows {end_index}..{end_index + horizon} but series has {len(series)}"
        )
    adj = series.features[:, ADJ_CLOSE_SLOT]
    return BUY if adj[end_index + horizon] - adj[end_index] > 0 else SELL


def window_starts(length: int, window_len: int, horizon: int, stride: int) -> range:
    if window_len < 2 or horizon < 1 or stride < 1:
        raise ValueError(f"need window_len >= 2, horizon >= 1, stride >= 1 (got {window_len}, {horizon}, {stride})")
    last = length - window_len - horizon
    return range(0, last + 1, stride) if last >= 0 else range(0)


def make_windows(series: TickerSeries, window_len: int, horizon: int, stride: int = 1) -> list[WindowSample]:
    """Unnormalized windows at starts 0, s, 2s, ... that leave room for the label."""
    feats = series.features
    dates = series.dates
    out = []
    for t in window_starts(len(series), window_len, horizon, stride):
        end = t + window_len - 1
        out.append(WindowSample(
            matrix=feats[t:end + 1].copy(),
            label=label_for(series, end, horizon),
            symbol=series.symbol,
            start_date=dates[t],
            end_date=dates[end],
            label_date=dates[end + horizon],
        ))
    return out


def normalize_window(matrix: np.ndarray) -> np.ndarray:
    """Per-channel min-max scaling to [0, 1] over the window only.

    Constant channels map to zero.
    """
    x = np.asarray(matrix, dtype=np.float64)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    flat = span == 0
    z = (x - lo) / np.where(flat, 1.0, span)
    z[:, flat] = 0.0
    return z


def prepare_samples(series: TickerSeries, window_len: int, horizon: int, stride: int = 1) -> list[WindowSample]:
    return [replace(s, matrix=normalize_window(s.matrix))
            for s in make_windows(series, window_len, horizon, stride)]


def split_sizes(n: int, train_frac: float, val_frac: float) -> tuple[int, int, int]:
    n_train = math.floor(train_frac * n)
    n_val = math.floor(val_frac * n)
    return n_train, n_val, n - n_train - n_val


def split_shuffle(samples: Sequence[WindowSample], train_frac: float = 0.7, val_frac: float = 0.15,
                  seed: int = 1, shuffle: bool = True) -> SplitDataset:
    """Shuffle (Fisher-Yates over ``Prng(seed)``) then cut into train/val/test.

    With ``shuffle=False`` the input order is kept, giving a chronological
    split when samples are in time order.
    """
    if not samples:
        raise DataError("cannot split an empty sample list")
    if not (0 < train_frac and 0 < val_frac and train_frac + val_frac < 1):
        raise ValueError(f"invalid split fractions {train_frac}, {val_frac}")
    order = list(samples)
    if shuffle:
        Prng(seed).shuffle(order)
    n_train, n_val, _ = split_sizes(len(order), train_frac, val_frac)
    return SplitDataset(
        train=order[:n_train],
        val=order[n_train:n_train + n_val],
        test=order[n_train + n_val:],
        seed=seed,
        fractions=(train_frac, val_frac),
    )


def batches(samples: Sequence, batch_size: int, epoch: int, seed: int, drop_small: bool = True) -> list[list]:
    """Reshuffle for ``epoch`` and chunk into consecutive batches.

    With ``drop_small`` a trailing batch of one sample is discarded, since
    batch normalization needs at least two rows in training mode.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = list(samples)
    Prng(epoch_seed(seed, epoch)).shuffle(order)
    out = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if drop_small and out and len(out[-1]) < 2:
        out.pop()
    return out


def stack(samples: Sequence[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    """Model input ``[B, C, W]`` (channel-major) and integer labels ``[B]``."""
    x = np.stack([s.matrix for s in samples]).transpose(0, 2, 1)
    y = np.array([s.label for s in samples], dtype=np.int64)
    return np.ascontiguousarray(x), y


def class_balance(samples: Iterable[WindowSample]) -> tuple[int, int]:
    labels = [s.label for s in samples]
    return labels.count(SELL), labels.count(BUY)


def write_manifest(samples: Iterable[WindowSample], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        for s in samples:
            w.writerow([s.symbol, s.start_date.isoformat(), s.end_date.isoformat(),
                        s.label_date.isoformat(), s.label])


def read_manifest(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_COLUMNS:
            raise DataError(f"{path}: manifest header must be {','.join(MANIFEST_COLUMNS)}")
        rows = []
        for r in reader:
            rows.append({
                "symbol": r["symbol"],
                "start_date": dt.date.fromisoformat(r["start_date"]),
                "end_date": dt.date.fromisoformat(r["end_date"]),
                "label_date": dt.date.fromisoformat(r["label_date"]),
                "label": int(r["label"]),
            })
    return rows


def samples_from_manifest(rows: Iterable[dict], series_by_symbol: dict[str, TickerSeries],
                          window_len: int) -> list[WindowSample]:
    """Recompute normalized windows for manifest rows from their source series."""
    out = []
    for r in rows:
        series = series_by_symbol.get(r["symbol"])
        if series is None:
            raise DataError(f"manifest references unknown symbol {r['symbol']!r}")
        try:
            t = series.dates.index(r["start_date"])
            end = t + window_len - 1
            horizon = series.dates.index(r["label_date"]) - end
        except ValueError:
            raise DataError(f"{r['symbol']}: manifest dates not found in series") from None
        if end >= len(series) or series.dates[end] != r["end_date"] or horizon < 1:
            raise DataError(f"{r['symbol']} {r['start_date']}: manifest window does not match window_len={window_len}")
        label = label_for(series, end, horizon)
        if label != r["label"]:
            raise DataError(f"{r['symbol']} {r['start_date']}: manifest label {r['label']} != recomputed {label}")
        out.append(WindowSample(normalize_window(series.features[t:end + 1]), label, r["symbol"],
                                r["start_date"], r["end_date"], r["label_date"]))
    return out
