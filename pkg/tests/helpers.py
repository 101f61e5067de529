"""Synthetic OHLC data for tests."""

from __future__ import annotations

from datetime import date, timedelta
import math
from pathlib import Path

import numpy as np

from ibs_bt.backtest import CostModel, decompose_legs, run_backtest
from ibs_bt.data import BarSeries, OhlcBar, align_calendars, write_ohlc_csv
from ibs_bt.indicators import compute_ibs
from ibs_bt.strategies import StrategyConfig, generate_signals


def business_days(start: date, n: int) -> list[date]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def synth_series(
    ticker: str,
    n_days: int,
    rng: np.random.Generator,
    start: date = date(2015, 1, 1),
    mean_revert: float = 0.0,
    drop_frac: float = 0.0,
    vol: float = 0.01,
) -> BarSeries:
    """Random valid bars. ``mean_revert`` > 0 makes the next close fall after a high IBS."""
    days = business_days(start, n_days)
    if drop_frac:
        keep = rng.random(n_days) >= drop_frac
        keep[0] = True
        days = [d for d, k in zip(days, keep) if k]
    prev = float(50 * np.exp(rng.normal(0, 0.5)))
    ibs_prev = 0.5
    bars = []
    for d in days:
        ret = -mean_revert * (ibs_prev - 0.5) + rng.normal(0, vol)
        o = prev * float(np.exp(rng.normal(0, vol / 3)))
        c = prev * (1 + ret)
        h = max(o, c) * (1 + abs(rng.normal(0, vol / 2)))
        lo = min(o, c) * (1 - abs(rng.normal(0, vol / 2)))
        adj = c * 0.9
        bars.append(OhlcBar(d, o, h, lo, c, adj, int(rng.integers(1000, 100000))))
        ibs_prev = (c - lo) / (h - lo) if h > lo else 0.5
        prev = c
    return BarSeries(ticker, tuple(bars))


def synth_universe(tickers, n_days, seed, **kw) -> dict[str, BarSeries]:
    rng = np.random.default_rng(seed)
    return {t: synth_series(t, n_days, rng, **kw) for t in tickers}


def write_dir(series: dict[str, BarSeries], path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    for t, s in series.items():
        with open(path / f"{t}.csv", "w", newline="") as fh:
            write_ohlc_csv(s, fh)
    return path


def series_from_ohlc(ticker: str, rows, start: date = date(2020, 1, 1)) -> BarSeries:
    """rows of (open, high, low, close) on consecutive business days."""
    days = business_days(start, len(rows))
    return BarSeries(ticker, tuple(OhlcBar(d, *map(float, r)) for d, r in zip(days, rows)))


def closes_series(ticker: str, closes, opens=None, start: date = date(2020, 1, 1)) -> BarSeries:
    """Bars with the given closes (and opens); high/low bracket them by 1%."""
    opens = closes if opens is None else opens
    rows = [(o, max(o, c) * 1.01, min(o, c) * 0.99, c) for o, c in zip(opens, closes)]
    return series_from_ohlc(ticker, rows, start)


def brute_force_ibs(high, low, close, n):
    """Direct per-window loop, independent of the sliding-window code."""
    T = len(close)
    out = [math.nan] * T
    for t in range(T):
        if t < n - 1:
            continue
        hi = high[t - n + 1]
        lo = low[t - n + 1]
        for s in range(t - n + 2, t + 1):
            hi = high[s] if high[s] > hi else hi
            lo = low[s] if low[s] < lo else lo
        if hi - lo > 0:
            out[t] = (close[t] - lo) / (hi - lo)
    return out


def _random_case(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 7))
    series = [synth_series(f"T{i}", int(rng.integers(12, 40)), rng, drop_frac=0.1) for i in range(k)]
    cfg = StrategyConfig(
        family=str(rng.choice(["minmax_basket", "topn_basket", "threshold_basket"])),
        n_held=int(rng.integers(1, 3)),
        holding_days=int(rng.integers(1, 5)),
        ibs_window=int(rng.integers(1, 3)),
        execution=str(rng.choice(["close_to_close", "open_to_open"])),
    )
    costs = CostModel(float(rng.uniform(0, 0.003)), float(rng.uniform(0, 0.001)))
    return series, cfg, costs, rng


def check_accounting(seed):
    series, cfg, costs, rng = _random_case(seed)
    panel = align_calendars(series)
    if len(panel) < cfg.holding_days + cfg.ibs_window + 2:
        return False
    res = run_backtest(panel, generate_signals(compute_ibs(panel, cfg.ibs_window), cfg), cfg, costs)
    for r in res.records:
        assert r.net_return == r.long_leg_return + r.short_leg_return - r.borrow_cost - r.slippage_cost
        assert r.in_market == bool(r.positions)
    oracle = []
    acc = 1.0
    for x in res.net_return:
        acc *= 1.0 + x
        oracle.append(acc)
    np.testing.assert_allclose(res.equity_curve, oracle, rtol=1e-12)
    assert (res.equity_curve > 0).all()

    perm = rng.permutation(len(series))
    panel2 = align_calendars([series[i] for i in perm])
    res2 = run_backtest(panel2, generate_signals(compute_ibs(panel2, cfg.ibs_window), cfg), cfg, costs)
    # raw column permutation, bypassing the sorted alignment
    cols = list(rng.permutation(len(panel.tickers)))
    panel3 = type(panel)(tuple(panel.tickers[c] for c in cols), panel.calendar,
                         *(getattr(panel, n)[:, cols].copy() for n in ("open", "high", "low", "close", "adj_close")))
    res3 = run_backtest(panel3, generate_signals(compute_ibs(panel3, cfg.ibs_window), cfg), cfg, costs)
    for other in (res2, res3):
        assert other.dates == res.dates
        for name in ("net_return", "long_leg", "short_leg", "borrow_cost", "slippage_cost", "in_market", "equity_curve"):
            np.testing.assert_array_equal(getattr(other, name), getattr(res, name))
        assert other.trade_log == res.trade_log
    if costs.borrow_rate_daily == 0 and costs.slippage_per_side == 0:
        lo, so = decompose_legs(res)
        np.testing.assert_array_equal(lo + so, res.net_return)
    return True
