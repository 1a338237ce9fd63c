"""Synthetic OHLCV generators with planted, learnable labels.

Used by the test suite and the bundled fixtures; all randomness comes from
:class:`~stockcnn.rng.Prng`.
"""

from __future__ import annotations

import datetime as dt

import numpy as np

from .dataset import BUY, SELL, WindowSample, normalize_window
from .market_data import RawBar, TickerSeries, build_series
from .rng import Prng


def business_days(start: dt.date, n: int) -> list[dt.date]:
    out, day = [], start
    while len(out) < n:
        if day.weekday() < 5:
            out.append(day)
        day += dt.timedelta(days=1)
    return out


def bars_from_closes(closes: np.ndarray, prng: Prng, start: dt.date = dt.date(2000, 1, 3),
                     split_at: int | None = None, split_ratio: float = 2.0) -> list[RawBar]:
    """Wrap a close path into consistent OHLCV bars.

    Adjusted fields equal the unadjusted ones unless ``split_at`` is given, in
    which case unadjusted prices before that index are ``split_ratio`` times
    higher (a forward split on day ``split_at``).
    """
    n = len(closes)
    wick = np.abs(prng.normal(2 * n)).reshape(n, 2) * 0.004
    vol = 1e6 * (1.0 + 0.25 * np.abs(prng.normal(n)))
    opens = np.concatenate([[closes[0]], closes[:-1]])
    bars = []
    for i, day in enumerate(business_days(start, n)):
        o, c = float(opens[i]), float(closes[i])
        hi = max(o, c) * (1.0 + float(wick[i, 0]))
        lo = min(o, c) * (1.0 - float(wick[i, 1]))
        factor = split_ratio if split_at is not None and i < split_at else 1.0
        bars.append(RawBar(
            date=day, open=o * factor, high=hi * factor, low=lo * factor, close=c * factor,
            volume=float(vol[i]) / factor, ex_dividend=0.0,
            split_ratio=split_ratio if split_at == i else 1.0,
            adj_open=o, adj_high=hi, adj_low=lo, adj_close=c, adj_volume=float(vol[i]),
            adj_factor=1.0 / factor,
        ))
    return bars


def planted_samples(n: int, window_len: int = 32, seed: int = 7, noise: float = 0.006,
                    drift: float = 0.004, symbol: str = "PLANT") -> list[WindowSample]:
    """``n`` independent normalized windows labelled by the sign of last minus first adjusted close.

    Each window is a geometric random walk with a per-sample drift of random
    sign and magnitude in ``[0.5, 1.5] * drift`` plus Gaussian noise of scale
    ``noise``; the label is read off the realized (noisy) path.
    """
    prng = Prng(seed)
    out = []
    start = dt.date(2000, 1, 3)
    for _ in range(n):
        sign = 1.0 if prng.next_float() < 0.5 else -1.0
        mu = sign * drift * (0.5 + prng.next_float())
        steps = mu + noise * prng.normal(window_len - 1)
        closes = 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))
        bars = bars_from_closes(closes, prng, start)
        series, _ = build_series(symbol, bars)
        feats = series.features
        label = BUY if feats[-1, 8] - feats[0, 8] > 0 else SELL
        out.append(WindowSample(normalize_window(feats), label, symbol, series.dates[0],
                                series.dates[-1], series.dates[-1] + dt.timedelta(days=1)))
        start = series.dates[-1] + dt.timedelta(days=1)
    return out


def regime_closes(n_days: int, prng: Prng, drift: float = 0.01, noise: float = 0.002,
                  min_regime: int = 60, max_regime: int = 120) -> np.ndarray:
    """Close path made of alternating up/down trends of random length.

    Within a regime each daily log-return is ``±drift + noise * N(0, 1)``, so
    the next-day direction is almost always the current trend direction.
    """
    steps = np.empty(n_days - 1)
    sign = 1.0 if prng.next_float() < 0.5 else -1.0
    i = 0
    while i < len(steps):
        length = min_regime + prng.below(max_regime - min_regime + 1)
        j = min(len(steps), i + length)
        steps[i:j] = sign * drift + noise * prng.normal(j - i)
        sign = -sign
        i = j
    return 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))


def regime_bars(n_days: int, seed: int = 11, start: dt.date = dt.date(2000, 1, 3),
                split_at: int | None = None, **kwargs) -> list[RawBar]:
    prng = Prng(seed)
    return bars_from_closes(regime_closes(n_days, prng, **kwargs), prng, start, split_at=split_at)


def regime_series(n_days: int, seed: int = 11, symbol: str = "TREND", **kwargs) -> TickerSeries:
    series, _ = build_series(symbol, regime_bars(n_days, seed, **kwargs))
    return series


def write_demo(out_dir, n_days: int = 1000, held_days: int = 600) -> dict:
    """Write a trending ticker, a held-out ticker and a quarter-scale config into ``out_dir``.

    Regimes of 150 to 250 days keep next-day direction predictable from the
    window; returns the written paths by role.
    """
    import json
    from pathlib import Path

    from .market_data import write_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    regimes = {"min_regime": 150, "max_regime": 250}
    paths = {"train": out / "TREND.csv", "held": out / "HELD.csv", "config": out / "demo_config.json"}
    write_csv(regime_bars(n_days, seed=11, **regimes), paths["train"])
    write_csv(regime_bars(held_days, seed=12, **regimes), paths["held"])
    config = {"input_csv": str(paths["train"]), "output_dir": str(out / "run"), "window_len": 32,
              "arch_scale": 0.25, "batch_size": 50, "epochs": 20, "seed": 1}
    paths["config"].write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return paths


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="write synthetic demo CSVs and a training config")
    parser.add_argument("--out", default="demo")
    for role, path in write_demo(parser.parse_args().out).items():
        print(f"{role}: {path}")
