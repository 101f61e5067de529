"""Internal bar strength over n-day windows and threshold hit-rate statistics."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import AlignedPanel, BarSeries, DataError


@dataclass(frozen=True, eq=False)
class IbsPanel:
    """IBS values shaped (dates, tickers); NaN marks an undefined value."""

    tickers: tuple[str, ...]
    calendar: tuple[date, ...]
    ibs: np.ndarray
    window_n: int

    def cross_section(self, t: int) -> dict[str, float]:
        row = self.ibs[t]
        return {tk: float(v) for tk, v in zip(self.tickers, row)}

    def series(self, ticker: str) -> np.ndarray:
        return self.ibs[:, self.tickers.index(ticker)]


@dataclass(frozen=True)
class ProbabilityRow:
    ticker: str
    p_long: float | None
    p_short: float | None
    n_long: int
    n_short: int


def rolling_extremes(high: np.ndarray, low: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Trailing n-row max of ``high`` and min of ``low``; first n-1 rows are NaN."""
    hi = np.full(high.shape, np.nan)
    lo = np.full(low.shape, np.nan)
    if high.shape[0] >= n:
        hi[n - 1:] = sliding_window_view(high, n, axis=0).max(axis=-1)
        lo[n - 1:] = sliding_window_view(low, n, axis=0).min(axis=-1)
    return hi, lo


def ibs_values(high: np.ndarray, low: np.ndarray, close: np.ndarray, window_n: int = 1) -> np.ndarray:
    """(close - lowest low) / (highest high - lowest low) over the trailing window.

    Undefined (NaN) where the window is incomplete or has zero range.
    """
    if window_n < 1:
        raise ValueError("window_n must be >= 1")
    hi, lo = rolling_extremes(high, low, window_n)
    rng = hi - lo
    out = np.full(close.shape, np.nan)
    ok = rng > 0
    out[ok] = (close[ok] - lo[ok]) / rng[ok]
    return out


def compute_ibs(panel: AlignedPanel, window_n: int = 1) -> IbsPanel:
    if window_n < 1:
        raise ValueError("window_n must be >= 1")
    if len(panel) == 0:
        raise DataError("panel is empty")
    values = ibs_values(panel.high, panel.low, panel.close, window_n)
    values.setflags(write=False)
    return IbsPanel(panel.tickers, panel.calendar, values, window_n)


def positive_return_probabilities(
    series: BarSeries,
    ibs: IbsPanel,
    long_thr: float = 0.2,
    short_thr: float = 0.8,
    basis: str = "raw",
) -> ProbabilityRow:
    """How often the next close moves in the mean-reverting direction.

    p_long is the share of days with IBS below ``long_thr`` whose next close
    is higher; p_short the share of days with IBS above ``short_thr`` whose
    next close is lower. Undefined IBS days and the final day are excluded.
    """
    if not 0 <= long_thr < short_thr <= 1:
        raise ValueError("thresholds must satisfy 0 <= long < short <= 1")
    if series.ticker not in ibs.tickers or ibs.calendar != series.dates:
        raise DataError(f"{series.ticker}: IBS calendar does not match the series")

    values = ibs.series(series.ticker)[:-1]
    close = series.prices("close", basis)
    up = close[1:] > close[:-1]
    down = close[1:] < close[:-1]

    low_days = values < long_thr  # NaN compares False
    high_days = values > short_thr
    n_long = int(low_days.sum())
    n_short = int(high_days.sum())
    p_long = float((low_days & up).sum() / n_long) if n_long else None
    p_short = float((high_days & down).sum() / n_short) if n_short else None
    return ProbabilityRow(series.ticker, p_long, p_short, n_long, n_short)
