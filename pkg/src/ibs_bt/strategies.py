"""Daily long/short selection rules driven by IBS."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from datetime import date
from typing import Mapping, Sequence

from .indicators import IbsPanel

FAMILIES = ("threshold_single", "minmax_basket", "topn_basket", "threshold_basket")
EXECUTIONS = ("close_to_close", "open_to_open")

# DailySignal.flag values
WARMUP = "warmup"
NO_TRADE = "incomplete cross-section"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StrategyConfig:
    family: str = "minmax_basket"
    long_threshold: float = 0.2
    short_threshold: float = 0.8
    n_held: int = 1
    holding_days: int = 1
    ibs_window: int = 1
    execution: str = "close_to_close"
    long_only: bool = False
    short_only: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")
        if self.execution not in EXECUTIONS:
            raise ConfigError(f"unknown execution {self.execution!r}; choose from {', '.join(EXECUTIONS)}")
        if not 0 <= self.long_threshold < self.short_threshold <= 1:
            raise ConfigError("thresholds must satisfy 0 <= long_threshold < short_threshold <= 1")
        if self.n_held < 1 or self.holding_days < 1 or self.ibs_window < 1:
            raise ConfigError("n_held, holding_days and ibs_window must be >= 1")
        if self.long_only and self.short_only:
            raise ConfigError("long_only and short_only are mutually exclusive")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "StrategyConfig":
        """Build from string or typed values, ignoring keys that are not fields."""
        kwargs = {}
        for f in fields(cls):
            if f.name not in values or values[f.name] is None:
                continue
            kwargs[f.name] = coerce(values[f.name], type(getattr(cls(), f.name)), f.name)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **changes) -> "StrategyConfig":
        return replace(self, **changes)


def coerce(value: object, kind: type, name: str = "value"):
    if isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot read {text!r} as {kind.__name__}") from None
    return text


@dataclass(frozen=True)
class DailySignal:
    date: date
    longs: frozenset[str] = frozenset()
    shorts: frozenset[str] = frozenset()
    flag: str | None = None

    def __post_init__(self):
        if self.longs & self.shorts:
            raise ValueError(f"{self.date}: longs and shorts overlap")

    @property
    def active(self) -> bool:
        return bool(self.longs or self.shorts)


def _defined(cross_section: Mapping[str, float]) -> dict[str, float]:
    return {t: v for t, v in cross_section.items() if v is not None and not math.isnan(v)}


def _apply_side_filter(sig: DailySignal, cfg: StrategyConfig) -> DailySignal:
    if cfg.long_only and sig.shorts:
        return replace(sig, shorts=frozenset())
    if cfg.short_only and sig.longs:
        return replace(sig, longs=frozenset())
    return sig


def signal_threshold_single(values: Sequence[float], dates: Sequence[date], ticker: str,
                            cfg: StrategyConfig) -> list[DailySignal]:
    """Trade one instrument: long below the long threshold, short above the short one."""
    out = []
    for day, v in zip(dates, values):
        if v is None or math.isnan(v):
            out.append(DailySignal(day))
        elif v < cfg.long_threshold:
            out.append(_apply_side_filter(DailySignal(day, longs=frozenset([ticker])), cfg))
        elif v > cfg.short_threshold:
            out.append(_apply_side_filter(DailySignal(day, shorts=frozenset([ticker])), cfg))
        else:
            out.append(DailySignal(day))
    return out


def signal_minmax(cross_section: Mapping[str, float], cfg: StrategyConfig, day: date | None = None) -> DailySignal:
    """Long the n_held lowest-IBS tickers, short the n_held highest.

    Ties go to the lexicographically smaller ticker. When the next candidate
    for both sides is the same ticker (its IBS equals every other remaining
    value) it is dropped from both and the next one is tried. Fewer than
    2 * n_held defined values gives a flagged no-trade signal.
    """
    vals = _defined(cross_section)
    n = cfg.n_held
    if len(vals) < 2 * n:
        return DailySignal(day, flag=NO_TRADE)
    asc = sorted(vals, key=lambda t: (vals[t], t))
    desc = sorted(vals, key=lambda t: (-vals[t], t))
    taken: set[str] = set()
    longs: list[str] = []
    shorts: list[str] = []
    i = j = 0
    while len(longs) < n and len(shorts) < n:
        while i < len(asc) and asc[i] in taken:
            i += 1
        while j < len(desc) and desc[j] in taken:
            j += 1
        if i == len(asc) or j == len(desc):
            break
        lo, hi = asc[i], desc[j]
        taken.update((lo, hi))
        if lo == hi:
            continue
        longs.append(lo)
        shorts.append(hi)
    if not longs or not shorts:
        return DailySignal(day, flag=NO_TRADE)
    return _apply_side_filter(DailySignal(day, frozenset(longs), frozenset(shorts)), cfg)


def signal_threshold_basket(cross_section: Mapping[str, float], cfg: StrategyConfig,
                            day: date | None = None) -> DailySignal:
    """Trade only when at least one ticker is below the long threshold and one above the short."""
    vals = _defined(cross_section)
    lows = sorted((t for t, v in vals.items() if v < cfg.long_threshold), key=lambda t: (vals[t], t))
    highs = sorted((t for t, v in vals.items() if v > cfg.short_threshold), key=lambda t: (-vals[t], t))
    if not lows or not highs:
        return DailySignal(day)
    sig = DailySignal(day, frozenset(lows[: cfg.n_held]), frozenset(highs[: cfg.n_held]))
    return _apply_side_filter(sig, cfg)


def generate_signals(ibs: IbsPanel, cfg: StrategyConfig) -> list[DailySignal]:
    """One signal per calendar date.

    Dates before the IBS window has filled are flagged ``warmup``.
    """
    warm = min(cfg.ibs_window, len(ibs.calendar)) - 1
    if ibs.window_n != cfg.ibs_window:
        raise ConfigError(f"IBS panel window {ibs.window_n} != config ibs_window {cfg.ibs_window}")
    if cfg.family == "threshold_single":
        if len(ibs.tickers) != 1:
            raise ConfigError("threshold_single needs a single-ticker panel")
        sigs = signal_threshold_single(ibs.ibs[:, 0].tolist(), ibs.calendar, ibs.tickers[0], cfg)
    else:
        rule = signal_threshold_basket if cfg.family == "threshold_basket" else signal_minmax
        sigs = [rule(ibs.cross_section(t), cfg, day) for t, day in enumerate(ibs.calendar)]
    for t in range(warm):
        sigs[t] = DailySignal(ibs.calendar[t], flag=WARMUP)
    return sigs
