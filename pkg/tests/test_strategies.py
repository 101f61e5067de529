import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibs_bt.data import align_calendars
from ibs_bt.indicators import compute_ibs
from ibs_bt.strategies import (
    NO_TRADE, WARMUP, ConfigError, DailySignal, StrategyConfig, generate_signals,
    signal_minmax, signal_threshold_basket, signal_threshold_single,
)
from helpers import synth_series

D = date(2020, 1, 2)
MINMAX = StrategyConfig()


def cfg(**kw):
    return StrategyConfig(**kw)


class TestConfig:
    def test_defaults(self):
        c = StrategyConfig()
        assert (c.long_threshold, c.short_threshold, c.n_held, c.holding_days, c.ibs_window) == (0.2, 0.8, 1, 1, 1)
        assert c.execution == "close_to_close"

    @pytest.mark.parametrize("kw", [
        {"long_threshold": 0.8, "short_threshold": 0.2},
        {"n_held": 0}, {"holding_days": 0}, {"ibs_window": 0},
        {"long_only": True, "short_only": True},
        {"family": "momentum"}, {"execution": "vwap"},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            StrategyConfig(**kw)

    def test_from_mapping_strings(self):
        c = StrategyConfig.from_mapping({"n_held": "2", "long_only": "true", "long_threshold": "0.1", "other": "x"})
        assert c.n_held == 2 and c.long_only is True and c.long_threshold == 0.1

    def test_from_mapping_bad_value(self):
        with pytest.raises(ConfigError, match="n_held"):
            StrategyConfig.from_mapping({"n_held": "two"})


class TestThresholdSingle:
    @pytest.mark.parametrize("v, side", [(0.1, "long"), (0.5, None), (0.2, None), (0.8, None), (0.9, "short"), (math.nan, None)])
    def test_rules(self, v, side):
        [sig] = signal_threshold_single([v], [D], "EWJ", MINMAX.with_(family="threshold_single"))
        assert sig.longs == (frozenset({"EWJ"}) if side == "long" else frozenset())
        assert sig.shorts == (frozenset({"EWJ"}) if side == "short" else frozenset())


class TestMinMax:
    def test_argmin_argmax(self):
        s = signal_minmax({"A": 0.1, "B": 0.5, "C": 0.9}, MINMAX)
        assert (s.longs, s.shorts) == ({"A"}, {"C"})

    def test_tie_lexicographic(self):
        s = signal_minmax({"B": 0.1, "A": 0.1, "C": 0.9}, MINMAX)
        assert s.longs == {"A"}
        s = signal_minmax({"A": 0.1, "C": 0.9, "B": 0.9}, MINMAX)
        assert s.shorts == {"B"}

    def test_top_two(self):
        s = signal_minmax({"A": 0.2, "B": 0.4, "C": 0.6, "D": 0.8}, cfg(family="topn_basket", n_held=2))
        assert (s.longs, s.shorts) == ({"A", "B"}, {"C", "D"})

    def test_too_few_defined(self):
        s = signal_minmax({"A": 0.2, "B": math.nan, "C": 0.6}, cfg(n_held=2))
        assert s.flag == NO_TRADE and not s.active
        s = signal_minmax({"A": 0.2, "B": math.nan, "C": 0.6}, MINMAX)
        assert (s.longs, s.shorts) == ({"A"}, {"C"})

    def test_all_equal_no_trade(self):
        s = signal_minmax({"A": 0.5, "B": 0.5}, MINMAX)
        assert s.flag == NO_TRADE and not s.active

    def test_center_tie_dropped(self):
        s = signal_minmax({"A": 0.1, "B": 0.5, "C": 0.5, "D": 0.9}, cfg(n_held=2))
        assert (s.longs, s.shorts) == ({"A"}, {"D"})

    def test_side_filters(self):
        xs = {"A": 0.1, "B": 0.5, "C": 0.9}
        assert signal_minmax(xs, cfg(long_only=True)).shorts == frozenset()
        assert signal_minmax(xs, cfg(short_only=True)).longs == frozenset()


class TestThresholdBasket:
    tb = StrategyConfig(family="threshold_basket")

    def test_both_crossed(self):
        s = signal_threshold_basket({"A": 0.1, "B": 0.9}, self.tb)
        assert (s.longs, s.shorts) == ({"A"}, {"B"})

    def test_one_side_only_is_flat(self):
        assert not signal_threshold_basket({"A": 0.1, "B": 0.5}, self.tb).active

    def test_most_extreme(self):
        s = signal_threshold_basket({"A": 0.15, "B": 0.05, "C": 0.95}, self.tb)
        assert (s.longs, s.shorts) == ({"B"}, {"C"})

    def test_cap_n_held(self):
        s = signal_threshold_basket({"A": 0.15, "B": 0.05, "C": 0.95, "D": 0.85, "E": 0.9}, self.tb.with_(n_held=2))
        assert (s.longs, s.shorts) == ({"A", "B"}, {"C", "E"})


def test_signal_overlap_rejected():
    with pytest.raises(ValueError):
        DailySignal(D, frozenset({"A"}), frozenset({"A"}))


cross_sections = st.dictionaries(
    st.sampled_from(list("ABCDEFGHIJ")),
    st.one_of(st.floats(0, 1), st.sampled_from([0.0, 0.25, 0.5, 1.0]), st.just(math.nan)),
    min_size=1,
)


@settings(max_examples=300, deadline=None)
@given(xs=cross_sections, n=st.integers(1, 4))
def test_minmax_invariants(xs, n):
    s = signal_minmax(xs, cfg(n_held=n))
    assert not (s.longs & s.shorts)
    assert len(s.longs) <= n and len(s.shorts) <= n
    if s.active:
        assert max(xs[t] for t in s.longs) <= min(xs[t] for t in s.shorts)
    defined = {t: v for t, v in xs.items() if not math.isnan(v)}
    if n == 1 and len(defined) >= 2 and len(set(defined.values())) > 1:
        assert len(s.longs) == 1 and len(s.shorts) == 1


@settings(max_examples=300, deadline=None)
@given(xs=cross_sections, n=st.integers(1, 3))
def test_threshold_basket_subset(xs, n):
    c = cfg(family="threshold_basket", n_held=n)
    s = signal_threshold_basket(xs, c)
    assert all(xs[t] < c.long_threshold for t in s.longs)
    assert all(xs[t] > c.short_threshold for t in s.shorts)
    assert bool(s.longs) == bool(s.shorts)


def _panel(seed, k=5, n=80):
    rng = np.random.default_rng(seed)
    return align_calendars([synth_series(f"T{i}", n, rng) for i in range(k)])


@pytest.mark.parametrize("family", ["minmax_basket", "topn_basket", "threshold_basket"])
def test_scaling_one_ticker_leaves_signals(family):
    p = _panel(11)
    c = cfg(family=family, n_held=2)
    base = generate_signals(compute_ibs(p), c)
    scaled = type(p)(p.tickers, p.calendar, p.open * [1, 1, 37.5, 1, 1], p.high * [1, 1, 37.5, 1, 1],
                     p.low * [1, 1, 37.5, 1, 1], p.close * [1, 1, 37.5, 1, 1], p.adj_close.copy())
    assert generate_signals(compute_ibs(scaled), c) == base


def test_generate_signals_warmup_and_determinism():
    p = _panel(4)
    c = cfg(ibs_window=3)
    sigs = generate_signals(compute_ibs(p, 3), c)
    assert [s.flag for s in sigs[:2]] == [WARMUP, WARMUP]
    assert all(s.active for s in sigs[2:])
    assert generate_signals(compute_ibs(p, 3), c) == sigs


def test_generate_signals_window_mismatch():
    p = _panel(4)
    with pytest.raises(ConfigError):
        generate_signals(compute_ibs(p, 2), cfg(ibs_window=1))


def test_threshold_single_needs_one_ticker():
    with pytest.raises(ConfigError):
        generate_signals(compute_ibs(_panel(1)), cfg(family="threshold_single"))
