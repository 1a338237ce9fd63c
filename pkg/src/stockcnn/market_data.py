"""Parsing and validation of daily OHLCV CSV exports.

A raw export carries 14 columns; the model consumes only the ten
price/volume columns (unadjusted and adjusted). Matching is done on header
names, case-insensitively, so column order in the file does not matter.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, fields
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import MarketDataError

RAW_COLUMNS = (
    "DATE", "OPEN", "HIGH", "LOW", "CLOSE", "VOLUME", "EX_DIVIDEND",
    "SPLIT_RATIO", "ADJ_OPEN", "ADJ_HIGH", "ADJ_LOW", "ADJ_CLOSE",
    "ADJ_VOLUME", "ADJ_FACTOR",
)
FEATURE_COLUMNS = (
    "OPEN", "HIGH", "LOW", "CLOSE", "VOLUME",
    "ADJ_OPEN", "ADJ_HIGH", "ADJ_LOW", "ADJ_CLOSE", "ADJ_VOLUME",
)
N_FEATURES = len(FEATURE_COLUMNS)
ADJ_CLOSE_SLOT = FEATURE_COLUMNS.index("ADJ_CLOSE")


@dataclass(frozen=True)
class RawBar:
    """One trading day as exported, all 14 columns."""

    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: float
    ex_dividend: float
    split_ratio: float
    adj_open: float
    adj_high: float
    adj_low: float
    adj_close: float
    adj_volume: float
    adj_factor: float


_NUMERIC_FIELDS = tuple(f.name for f in fields(RawBar) if f.name != "date")


@dataclass(frozen=True)
class FeatureBar:
    date: dt.date
    features: tuple[float, ...]


@dataclass(frozen=True)
class RowDiagnostic:
    """Why a row (1-based file line, or 0-based bar index) was dropped."""

    line: int
    reason: str


@dataclass(frozen=True)
class TickerSeries:
    """Validated bars of one ticker, strictly increasing in date."""

    symbol: str
    bars: tuple[FeatureBar, ...]

    def __len__(self):
        return len(self.bars)

    @cached_property
    def features(self) -> np.ndarray:
        """``[L, 10]`` float64 matrix of the feature bars."""
        arr = np.array([b.features for b in self.bars], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def dates(self) -> tuple[dt.date, ...]:
        return tuple(b.date for b in self.bars)


class InvalidBar(MarketDataError):
    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field = field_name
        self.reason = reason


def parse_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ValueError(f"unparseable date {text.strip()!r}") from None


def parse_csv(content: bytes | str, lenient: bool = False) -> tuple[list[RawBar], list[RowDiagnostic]]:
    """Parse a 14-column OHLCV CSV.

    Returns the well-formed bars in file order and, in lenient mode, one
    diagnostic per skipped row. In strict mode the first malformed row raises
    :class:`MarketDataError`.
    """
    if isinstance(content, bytes):
        try:
            content = content.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise MarketDataError(f"input is not UTF-8: {exc}") from None
    reader = csv.reader(io.StringIO(content))
    header = next(reader, None)
    while header is not None and not any(h.strip() for h in header):
        header = next(reader, None)
    if header is None:
        raise MarketDataError("empty file: no header row")

    names = [h.strip().upper() for h in header]
    missing = [c for c in RAW_COLUMNS if c not in names]
    if missing:
        raise MarketDataError(f"missing required column(s): {', '.join(missing)}", line=1)
    index = {c: names.index(c) for c in RAW_COLUMNS}
    width = len(names)

    bars: list[RawBar] = []
    diagnostics: list[RowDiagnostic] = []
    for row in reader:
        line = reader.line_num
        if not any(cell.strip() for cell in row):
            continue
        try:
            bars.append(_row_to_bar(row, index, width))
        except ValueError as exc:
            if not lenient:
                raise MarketDataError(str(exc), line=line) from None
            diagnostics.append(RowDiagnostic(line, str(exc)))
    return bars, diagnostics


def _row_to_bar(row: list[str], index: dict[str, int], width: int) -> RawBar:
    if len(row) != width:
        raise ValueError(f"expected {width} fields, got {len(row)}")
    values = {}
    for name in _NUMERIC_FIELDS:
        raw = row[index[name.upper()]].strip()
        try:
            values[name] = float(raw)
        except ValueError:
            raise ValueError(f"non-numeric {name.upper()} value {raw!r}") from None
    return RawBar(date=parse_date(row[index["DATE"]]), **values)


def read_csv(path: str | Path, lenient: bool = False) -> tuple[list[RawBar], list[RowDiagnostic]]:
    return parse_csv(Path(path).read_bytes(), lenient=lenient)


_PRICE_GROUPS = (
    ("open", "high", "low", "close"),
    ("adj_open", "adj_high", "adj_low", "adj_close"),
)


def validate_bar(bar: RawBar) -> RawBar:
    """Return ``bar`` unchanged if it is internally consistent.

    Raises :class:`InvalidBar` naming the first violated invariant.
    """
    for name in _NUMERIC_FIELDS:
        if not math.isfinite(getattr(bar, name)):
            raise InvalidBar(name, "non-finite value")
    for group in _PRICE_GROUPS:
        for name in group:
            if getattr(bar, name) <= 0:
                raise InvalidBar(name, "non-positive price")
    for name in ("volume", "adj_volume"):
        if getattr(bar, name) < 0:
            raise InvalidBar(name, "negative volume")
    for o, h, l, c in _PRICE_GROUPS:
        op, hi, lo, cl = (getattr(bar, n) for n in (o, h, l, c))
        if hi < lo:
            raise InvalidBar(h, "high < low")
        for name, value in ((o, op), (c, cl)):
            if not lo <= value <= hi:
                raise InvalidBar(name, "outside [low, high]")
    return bar


def select_features(bar: RawBar) -> FeatureBar:
    return FeatureBar(bar.date, tuple(getattr(bar, c.lower()) for c in FEATURE_COLUMNS))


def build_series(symbol: str, bars: Iterable[RawBar], lenient: bool = False) -> tuple[TickerSeries, list[RowDiagnostic]]:
    """Validate bars and build a date-sorted :class:`TickerSeries`.

    Diagnostics carry the 0-based position of the offending bar in ``bars``.
    Duplicate dates raise in strict mode; lenient mode keeps the first
    occurrence (in input order).
    """
    kept: dict[dt.date, FeatureBar] = {}
    diagnostics: list[RowDiagnostic] = []
    for i, bar in enumerate(bars):
        try:
            validate_bar(bar)
        except InvalidBar as exc:
            if not lenient:
                raise MarketDataError(f"{symbol} {bar.date}: {exc}") from None
            diagnostics.append(RowDiagnostic(i, f"{bar.date}: {exc}"))
            continue
        if bar.date in kept:
            if not lenient:
                raise MarketDataError(f"{symbol}: duplicate date {bar.date.isoformat()}")
            diagnostics.append(RowDiagnostic(i, f"duplicate date {bar.date.isoformat()}"))
            continue
        kept[bar.date] = select_features(bar)
    if not kept:
        raise MarketDataError(f"{symbol}: no valid bars")
    ordered = tuple(kept[d] for d in sorted(kept))
    return TickerSeries(symbol, ordered), diagnostics


def symbol_from_path(path: str | Path) -> str:
    return Path(path).stem.upper()


def load_series(path: str | Path, lenient: bool = False, symbol: str | None = None) -> tuple[TickerSeries, list[RowDiagnostic]]:
    """Read and validate one ticker CSV into a date-ordered series. Row and bar diagnostics are concatenated."""
    raw, row_diags = read_csv(path, lenient=lenient)
    series, bar_diags = build_series(symbol or symbol_from_path(path), raw, lenient=lenient)
    return series, row_diags + bar_diags


def write_csv(bars: Iterable[RawBar], path: str | Path) -> None:
    """Write bars in the canonical 14-column layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RAW_COLUMNS)
        for b in bars:
            w.writerow([b.date.isoformat()] + [repr(float(getattr(b, n))) for n in _NUMERIC_FIELDS])
