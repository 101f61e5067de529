"""
Performance statistics for daily return series.

Sharpe uses a zero risk-free rate, the sample (n-1) standard deviation and
sqrt(252) annualization.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

TRADING_DAYS = 252


@dataclass(frozen=True)
class PerformanceSummary:
    sharpe: float | None
    time_in: float
    total_return: float
    max_drawdown: float
    n_days: int

    def to_dict(self) -> dict:
        return asdict(self)


def sharpe_ratio(daily_returns: Sequence[float], periods: int = TRADING_DAYS) -> float | None:
    """Annualized Sharpe ratio, or None when the returns have zero variance.

    Raises ValueError for fewer than two observations.
    """
    r = np.asarray(daily_returns, dtype=float)
    if r.size < 2:
        raise ValueError("Sharpe ratio needs at least 2 observations")
    if np.all(r == r[0]):
        return None
    sd = r.std(ddof=1)
    if sd == 0 or not math.isfinite(sd):
        return None
    return float(r.mean() / sd * math.sqrt(periods))


def time_in(records: Iterable) -> float:
    """Fraction of days in the market; accepts records or a boolean array."""
    flags = [bool(getattr(r, "in_market", r)) for r in records]
    if not flags:
        raise ValueError("time_in needs at least one record")
    return sum(flags) / len(flags)


def max_drawdown(equity: Sequence[float]) -> float:
    curve = np.asarray(equity, dtype=float)
    if curve.size == 0:
        return 0.0
    if (curve <= 0).any():
        raise ValueError("equity curve must be positive")
    peak = np.maximum.accumulate(curve)
    return float(np.max(1.0 - curve / peak))


def summarize(result) -> PerformanceSummary:
    """Headline metrics for a BacktestResult.

    Drawdown is measured from the initial capital of 1.0.
    """
    n = len(result.net_return)
    if n == 0:
        raise ValueError("backtest produced no records")
    sharpe = sharpe_ratio(result.net_return) if n >= 2 else None
    curve = np.concatenate(([1.0], result.equity_curve))
    return PerformanceSummary(
        sharpe=sharpe,
        time_in=time_in(result.in_market),
        total_return=float(result.equity_curve[-1] - 1.0),
        max_drawdown=max_drawdown(curve),
        n_days=n,
    )
