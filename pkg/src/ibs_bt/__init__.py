"""IBS mean-reversion backtesting for ETF baskets."""

from .backtest import BacktestResult, CostModel, buy_and_hold, decompose_legs, run_backtest
from .data import AlignedPanel, BarSeries, OhlcBar, align_calendars, parse_ohlc_csv, validate_bar
from .indicators import IbsPanel, compute_ibs, positive_return_probabilities
from .metrics import PerformanceSummary, max_drawdown, sharpe_ratio, summarize, time_in
from .strategies import DailySignal, StrategyConfig, generate_signals
from .sweep import SweepSpec, Universe, draw_baskets, load_universe, run_sweep

__version__ = "0.1.0"

__all__ = [
    "AlignedPanel", "BacktestResult", "BarSeries", "CostModel", "DailySignal", "IbsPanel",
    "OhlcBar", "PerformanceSummary", "StrategyConfig", "SweepSpec", "Universe",
    "align_calendars", "buy_and_hold", "compute_ibs", "decompose_legs", "draw_baskets",
    "generate_signals", "load_universe", "max_drawdown", "parse_ohlc_csv",
    "positive_return_probabilities", "run_backtest", "run_sweep", "sharpe_ratio",
    "summarize", "time_in", "validate_bar",
]
