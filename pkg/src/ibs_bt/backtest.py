"""
Daily long/short portfolio simulation.

Capital is split into ``holding_days`` equal tranches. Each day's signal
opens a tranche that is held for ``holding_days`` days; within a tranche
half the capital is long and half short, equally weighted per name, and
rebalanced daily (simple returns). Borrow cost accrues on the short half of
every open tranche.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

import numpy as np

from .data import AlignedPanel, BarSeries
from .strategies import WARMUP, DailySignal, StrategyConfig

logger = logging.getLogger(__name__)


class BacktestError(RuntimeError):
    pass


@dataclass(frozen=True)
class CostModel:
    borrow_rate_daily: float = 0.0001
    slippage_per_side: float = 0.0

    def __post_init__(self):
        if self.borrow_rate_daily < 0 or self.slippage_per_side < 0:
            raise ValueError("cost rates must be >= 0")


@dataclass(frozen=True)
class DailyPortfolioRecord:
    date: date
    long_leg_return: float
    short_leg_return: float
    borrow_cost: float
    slippage_cost: float
    net_return: float
    in_market: bool
    positions: tuple[DailySignal, ...]  # signals of the tranches open that day


@dataclass(frozen=True)
class Trade:
    ticker: str
    side: str  # "long" | "short"
    entry_date: date
    exit_date: date
    weight: float  # fraction of total capital


@dataclass(eq=False)
class BacktestResult:
    dates: tuple[date, ...]
    long_leg: np.ndarray
    short_leg: np.ndarray
    borrow_cost: np.ndarray
    slippage_cost: np.ndarray
    net_return: np.ndarray
    in_market: np.ndarray
    equity_curve: np.ndarray
    config: StrategyConfig | None
    costs: CostModel
    basis: str = "raw"
    trade_log: tuple[Trade, ...] = ()
    flags: tuple[str, ...] = ()
    _positions: tuple[tuple[DailySignal, ...], ...] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def records(self) -> list[DailyPortfolioRecord]:
        positions = self._positions or ((),) * len(self.dates)
        return [
            DailyPortfolioRecord(
                d,
                float(self.long_leg[i]),
                float(self.short_leg[i]),
                float(self.borrow_cost[i]),
                float(self.slippage_cost[i]),
                float(self.net_return[i]),
                bool(self.in_market[i]),
                positions[i],
            )
            for i, d in enumerate(self.dates)
        ]


def _equity(net: np.ndarray) -> np.ndarray:
    curve = np.cumprod(1.0 + net)
    if curve.size and not (curve > 0).all():
        bad = int(np.argmax(curve <= 0))
        raise BacktestError(f"equity curve hit {curve[bad]!r} at record {bad}")
    return curve


def run_backtest(
    panel: AlignedPanel,
    signals: Sequence[DailySignal],
    cfg: StrategyConfig,
    costs: CostModel = CostModel(),
    basis: str = "raw",
    record_trades: bool = True,
) -> BacktestResult:
    """Execute one signal per calendar date into a daily return series.

    close_to_close enters at the signal day's close; open_to_open enters at
    the next day's open. Either way a tranche earns H one-day returns on the
    execution price and is then closed. Tranches that would run past the
    last date are skipped and flagged. Records start on the first day a
    tranche could be open after IBS warm-up.
    """
    T, K = len(panel.calendar), len(panel.tickers)
    if len(signals) != T or any(s.date != d for s, d in zip(signals, panel.calendar)):
        raise ValueError("signals must be aligned one-to-one with the panel calendar")
    H = cfg.holding_days
    if T < H + 1:
        raise ValueError(f"need at least {H + 1} dates for holding_days={H}, got {T}")

    delay = 0 if cfg.execution == "close_to_close" else 1
    order = np.argsort(panel.tickers, kind="stable")
    tickers = [panel.tickers[k] for k in order]
    col = {t: i for i, t in enumerate(tickers)}
    px = panel.prices("close" if delay == 0 else "open", basis)[:, order]
    rets = np.zeros((T, K))
    rets[1:] = px[1:] / px[:-1] - 1.0

    w_long = np.zeros((T, K))
    w_short = np.zeros((T, K))
    opened = np.zeros(T, dtype=bool)
    flags: list[str] = []
    for t, sig in enumerate(signals):
        if sig.flag and sig.flag != WARMUP:
            flags.append(f"{sig.date}: no-trade ({sig.flag})")
        if not sig.active:
            continue
        if t + delay + H > T - 1:
            flags.append(f"{sig.date}: tranche skipped, exit beyond end of data")
            continue
        opened[t] = True
        for side, w in ((sig.longs, w_long), (sig.shorts, w_short)):
            for tk in side:
                w[t, col[tk]] = 0.5 / len(side)

    lead = 0
    while lead < T and signals[lead].flag == WARMUP:
        lead += 1
    start = lead + delay + 1
    if start > T - 1:
        raise ValueError("no tradable days after IBS warm-up")

    has_long = w_long.sum(axis=1) > 0
    has_short = w_short.sum(axis=1) > 0
    notional = 0.5 * has_long + 0.5 * has_short

    long_sum = np.zeros(T)
    short_sum = np.zeros(T)
    n_short_open = np.zeros(T)
    n_open = np.zeros(T)
    slip_notional = np.zeros(T)
    for j in range(1, H + 1):
        lag = j + delay
        wl = np.zeros((T, K))
        ws = np.zeros((T, K))
        wl[lag:] = w_long[:-lag]
        ws[lag:] = w_short[:-lag]
        long_sum += (wl * rets).sum(axis=1)
        short_sum += (ws * rets).sum(axis=1)
        n_short_open[lag:] += has_short[:-lag]
        n_open[lag:] += opened[:-lag]
        if j == 1:
            slip_notional[lag:] += notional[:-lag]
        if j == H:
            slip_notional[lag:] += notional[:-lag]

    sl = slice(start, T)
    long_leg = long_sum[sl] / H
    short_leg = -short_sum[sl] / H
    borrow = costs.borrow_rate_daily * 0.5 * n_short_open[sl] / H
    slippage = costs.slippage_per_side * slip_notional[sl] / H
    net = long_leg + short_leg - borrow - slippage
    in_market = n_open[sl] > 0

    positions = tuple(
        tuple(signals[s - j - delay] for j in range(H, 0, -1) if s - j - delay >= 0 and opened[s - j - delay])
        for s in range(start, T)
    )

    trades: list[Trade] = []
    if record_trades:
        for t in np.flatnonzero(opened):
            sig = signals[t]
            entry, exit_ = panel.calendar[t + delay], panel.calendar[t + delay + H]
            for side, names in (("long", sig.longs), ("short", sig.shorts)):
                for tk in sorted(names):
                    trades.append(Trade(tk, side, entry, exit_, 0.5 / len(names) / H))

    return BacktestResult(
        dates=panel.calendar[start:],
        long_leg=long_leg,
        short_leg=short_leg,
        borrow_cost=borrow,
        slippage_cost=slippage,
        net_return=net,
        in_market=in_market,
        equity_curve=_equity(net),
        config=cfg,
        costs=costs,
        basis=basis,
        trade_log=tuple(trades),
        flags=tuple(flags),
        _positions=positions,
    )


def buy_and_hold(series: BarSeries, basis: str = "raw") -> BacktestResult:
    """Fully invested single-instrument benchmark on close-to-close returns."""
    close = series.prices("close", basis)
    rets = close[1:] / close[:-1] - 1.0
    zeros = np.zeros_like(rets)
    return BacktestResult(
        dates=series.dates[1:],
        long_leg=rets,
        short_leg=zeros,
        borrow_cost=zeros.copy(),
        slippage_cost=zeros.copy(),
        net_return=rets.copy(),
        in_market=np.ones(rets.shape, dtype=bool),
        equity_curve=_equity(rets),
        config=None,
        costs=CostModel(0.0, 0.0),
        basis=basis,
    )


def decompose_legs(result: BacktestResult) -> tuple[np.ndarray, np.ndarray]:
    """(long-only, short-only) daily returns; borrow cost goes with the short side."""
    return result.long_leg.copy(), result.short_leg - result.borrow_cost
