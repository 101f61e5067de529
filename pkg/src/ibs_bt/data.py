"""
OHLC ingestion: CSV parsing, bar validation and calendar alignment.

Input files follow the Yahoo Finance daily download layout::

    Date,Open,High,Low,Close,Adj Close,Volume

with ``Adj Close`` and ``Volume`` optional. One file per ticker; the file
stem is the ticker unless overridden.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("Date", "Open", "High", "Low", "Close")
OPTIONAL_COLUMNS = ("Adj Close", "Volume")
POLICIES = ("strict", "clamp")


class DataError(ValueError):
    """Raised for input that cannot be turned into a usable series or panel."""


class BarRejected(ValueError):
    """A bar violating the OHLC invariants under the active policy."""

    def __init__(self, reason: str, bar: "OhlcBar | None" = None):
        super().__init__(reason)
        self.reason = reason
        self.bar = bar


@dataclass(frozen=True)
class OhlcBar:
    date: date
    open: float
    high: float
    low: float
    close: float
    adj_close: float | None = None
    volume: int | None = None


@dataclass(frozen=True)
class BarSeries:
    ticker: str
    bars: tuple[OhlcBar, ...]
    warnings: tuple[str, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not self.bars:
            raise DataError(f"{self.ticker}: series is empty")
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date <= prev.date:
                raise DataError(f"{self.ticker}: dates not strictly ascending at {cur.date}")

    def __len__(self) -> int:
        return len(self.bars)

    @property
    def dates(self) -> tuple[date, ...]:
        return tuple(b.date for b in self.bars)

    def prices(self, column: str = "close", basis: str = "raw") -> np.ndarray:
        """Price column as a float array; ``basis='adjusted'`` rescales by adj_close/close."""
        values = np.array([getattr(b, column) for b in self.bars], dtype=float)
        if basis == "raw":
            return values
        if basis != "adjusted":
            raise ValueError(f"unknown return basis {basis!r}")
        if any(b.adj_close is None for b in self.bars):
            raise DataError(f"{self.ticker}: adjusted basis requested but Adj Close is missing")
        adj = np.array([b.adj_close for b in self.bars], dtype=float)
        if column == "close":
            return adj
        close = np.array([b.close for b in self.bars], dtype=float)
        return values * (adj / close)


def validate_bar(bar: OhlcBar, policy: str = "strict") -> OhlcBar:
    """Check one bar against the OHLC invariants.

    ``strict`` raises :class:`BarRejected` naming the first violated invariant.
    ``clamp`` widens high/low to cover open and close and accepts the bar.
    Non-positive prices are rejected under either policy.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown validation policy {policy!r}")
    prices = (bar.open, bar.high, bar.low, bar.close)
    if any(not (p > 0) or math.isinf(p) for p in prices):
        raise BarRejected("non-positive price", bar)
    if bar.adj_close is not None and not (bar.adj_close > 0):
        raise BarRejected("non-positive adj close", bar)
    if bar.volume is not None and bar.volume < 0:
        raise BarRejected("negative volume", bar)

    if policy == "clamp":
        high = max(bar.high, bar.open, bar.close)
        low = min(bar.low, bar.open, bar.close)
        if high == bar.high and low == bar.low:
            return bar
        return OhlcBar(bar.date, bar.open, high, low, bar.close, bar.adj_close, bar.volume)

    checks = (
        (bar.high < bar.low, "high < low"),
        (bar.high < bar.open, "high < open"),
        (bar.high < bar.close, "high < close"),
        (bar.low > bar.open, "low > open"),
        (bar.low > bar.close, "low > close"),
    )
    for failed, reason in checks:
        if failed:
            raise BarRejected(reason, bar)
    return bar


def _parse_float(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}: unparseable {column} value {text!r}") from None
    if math.isnan(value):
        raise DataError(f"line {line}: unparseable {column} value {text!r}")
    return value


def parse_ohlc_csv(source: TextIO, ticker: str, policy: str = "strict") -> BarSeries:
    """Parse a daily OHLC CSV stream into a date-sorted, deduplicated series.

    Bars failing validation and repeated dates are dropped with a warning;
    the warnings are kept on ``BarSeries.warnings``. Structural problems
    (bad header, unparseable numbers, non-positive prices, no rows) raise
    :class:`DataError`.
    """
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{ticker}: empty file") from None
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise DataError(f"{ticker}: malformed header, missing {', '.join(missing)}")
    idx = {name: header.index(name) for name in REQUIRED_COLUMNS + OPTIONAL_COLUMNS if name in header}

    warnings: list[str] = []
    seen: dict[date, OhlcBar] = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise DataError(f"{ticker}: line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            day = date.fromisoformat(row[idx["Date"]].strip())
        except ValueError:
            raise DataError(f"{ticker}: line {line}: bad date {row[idx['Date']]!r}") from None
        o, h, l, c = (_parse_float(row[idx[k]], k, line) for k in ("Open", "High", "Low", "Close"))
        if min(o, h, l, c) <= 0:
            raise DataError(f"{ticker}: line {line}: non-positive price")
        adj = None
        if "Adj Close" in idx and row[idx["Adj Close"]].strip():
            adj = _parse_float(row[idx["Adj Close"]], "Adj Close", line)
            if adj <= 0:
                raise DataError(f"{ticker}: line {line}: non-positive price")
        vol = None
        if "Volume" in idx and row[idx["Volume"]].strip():
            vol = int(_parse_float(row[idx["Volume"]], "Volume", line))

        bar = OhlcBar(day, o, h, l, c, adj, vol)
        try:
            bar = validate_bar(bar, policy)
        except BarRejected as exc:
            warnings.append(f"{ticker}: line {line} ({day}) rejected: {exc.reason}")
            continue
        if day in seen:
            warnings.append(f"{ticker}: line {line} ({day}) rejected: duplicate date")
            continue
        seen[day] = bar

    for w in warnings:
        logger.warning(w)
    if not seen:
        raise DataError(f"{ticker}: no valid rows")
    bars = tuple(seen[d] for d in sorted(seen))
    return BarSeries(ticker, bars, tuple(warnings))


def write_ohlc_csv(series: BarSeries, sink: TextIO) -> None:
    """Inverse of :func:`parse_ohlc_csv` for accepted series (lossless floats)."""
    has_adj = any(b.adj_close is not None for b in series.bars)
    has_vol = any(b.volume is not None for b in series.bars)
    header = list(REQUIRED_COLUMNS)
    if has_adj:
        header.append("Adj Close")
    if has_vol:
        header.append("Volume")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(header)
    for b in series.bars:
        row = [b.date.isoformat(), repr(b.open), repr(b.high), repr(b.low), repr(b.close)]
        if has_adj:
            row.append("" if b.adj_close is None else repr(b.adj_close))
        if has_vol:
            row.append("" if b.volume is None else str(b.volume))
        writer.writerow(row)


def load_series(path: str | Path, ticker: str | None = None, policy: str = "strict") -> BarSeries:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing ticker file: {path}")
    with open(path, newline="") as fh:
        return parse_ohlc_csv(fh, ticker or path.stem, policy)


def load_data_dir(
    data_dir: str | Path, tickers: Iterable[str] | None = None, policy: str = "strict"
) -> dict[str, BarSeries]:
    """Load ``<ticker>.csv`` files from a directory, keyed by ticker, sorted."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"data directory not found: {data_dir}")
    if tickers is None:
        paths = sorted(data_dir.glob("*.csv"))
        if not paths:
            raise DataError(f"no CSV files in {data_dir}")
    else:
        paths = [data_dir / f"{t}.csv" for t in sorted(set(tickers))]
    return {p.stem: load_series(p, p.stem, policy) for p in paths}


@dataclass(frozen=True, eq=False)
class AlignedPanel:
    """Instruments on a shared calendar; price arrays are shaped (dates, tickers)."""

    tickers: tuple[str, ...]
    calendar: tuple[date, ...]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    adj_close: np.ndarray  # NaN where the source had no Adj Close

    def __post_init__(self):
        shape = (len(self.calendar), len(self.tickers))
        for name in ("open", "high", "low", "close", "adj_close"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
        for prev, cur in zip(self.calendar, self.calendar[1:]):
            if cur <= prev:
                raise ValueError("calendar must be strictly ascending")

    def __len__(self) -> int:
        return len(self.calendar)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AlignedPanel):
            return NotImplemented
        return (
            self.tickers == other.tickers
            and self.calendar == other.calendar
            and all(
                np.array_equal(getattr(self, n), getattr(other, n), equal_nan=True)
                for n in ("open", "high", "low", "close", "adj_close")
            )
        )

    def column(self, ticker: str) -> int:
        try:
            return self.tickers.index(ticker)
        except ValueError:
            raise KeyError(ticker) from None

    def bar(self, ticker: str, day: date) -> OhlcBar:
        k = self.column(ticker)
        t = self.calendar.index(day)
        adj = self.adj_close[t, k]
        return OhlcBar(
            day,
            float(self.open[t, k]),
            float(self.high[t, k]),
            float(self.low[t, k]),
            float(self.close[t, k]),
            None if math.isnan(adj) else float(adj),
        )

    def prices(self, column: str = "close", basis: str = "raw") -> np.ndarray:
        """Price matrix for returns; ``adjusted`` scales by adj_close/close."""
        values = getattr(self, column)
        if basis == "raw":
            return values
        if basis != "adjusted":
            raise ValueError(f"unknown return basis {basis!r}")
        if np.isnan(self.adj_close).any():
            raise DataError("adjusted basis requested but Adj Close is missing")
        if column == "close":
            return self.adj_close
        return values * (self.adj_close / self.close)

    def select(self, tickers: Sequence[str]) -> "AlignedPanel":
        """Column subset on the existing calendar (no re-alignment)."""
        cols = [self.column(t) for t in tickers]
        return AlignedPanel(
            tuple(tickers),
            self.calendar,
            *(getattr(self, n)[:, cols].copy() for n in ("open", "high", "low", "close", "adj_close")),
        )


def _build_panel(series: Sequence[BarSeries], calendar: Sequence[date]) -> AlignedPanel:
    T, K = len(calendar), len(series)
    arrays = {n: np.empty((T, K)) for n in ("open", "high", "low", "close", "adj_close")}
    cal_set = set(calendar)
    for k, s in enumerate(series):
        rows = [b for b in s.bars if b.date in cal_set]
        for name in ("open", "high", "low", "close"):
            arrays[name][:, k] = [getattr(b, name) for b in rows]
        arrays["adj_close"][:, k] = [np.nan if b.adj_close is None else b.adj_close for b in rows]
    return AlignedPanel(tuple(s.ticker for s in series), tuple(calendar), **arrays)


def align_calendars(series: Sequence[BarSeries]) -> AlignedPanel:
    """Join series on the intersection of their dates.

    Tickers are ordered lexicographically so the result does not depend on
    the order of ``series``.
    """
    if len(series) < 2:
        raise DataError("alignment needs at least 2 series")
    tickers = [s.ticker for s in series]
    if len(set(tickers)) != len(tickers):
        raise DataError("duplicate tickers in alignment input")
    common = set(series[0].dates)
    for s in series[1:]:
        common &= set(s.dates)
    if not common:
        raise DataError("empty intersection of calendars")
    ordered = sorted(series, key=lambda s: s.ticker)
    return _build_panel(ordered, sorted(common))


def panel_from_series(series: BarSeries) -> AlignedPanel:
    """Single-instrument panel on the series' own calendar."""
    return _build_panel([series], series.dates)


def make_panel(series: Mapping[str, BarSeries] | Sequence[BarSeries], tickers: Iterable[str] | None = None) -> AlignedPanel:
    """Panel for any number (>= 1) of series; one series skips alignment."""
    if isinstance(series, Mapping):
        chosen = [series[t] for t in (tickers if tickers is not None else series)]
    else:
        chosen = list(series)
    if len(chosen) == 1:
        return panel_from_series(chosen[0])
    return align_calendars(chosen)
