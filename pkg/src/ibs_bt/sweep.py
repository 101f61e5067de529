"""
Basket search and parameter grids.

Baskets are drawn at random from a classified ETF universe (each draw seeded
from ``(seed, draw_index)`` so draws are independent of evaluation order),
then every basket is re-aligned on its own members' calendar and evaluated
at every grid point.
"""

from __future__ import annotations

import csv
import itertools
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .backtest import CostModel, decompose_legs, run_backtest
from .data import BarSeries, make_panel
from .indicators import compute_ibs
from .metrics import sharpe_ratio, time_in
from .strategies import ConfigError, StrategyConfig, coerce, generate_signals

logger = logging.getLogger(__name__)

EMERGING = "Emerging"
DEVELOPED = "Developed"
MIXED = "Mixed"
CONSTRAINTS = {"any": None, "emerging_only": EMERGING, "developed_only": DEVELOPED}

# Short country labels used when baskets are written by name.
COUNTRY_ALIASES = {
    "india": "PIN",
    "china": "FXI",
    "sk": ("EWI", "EWY"),
    "mexico": "EWW",
    "mex": "EWW",
    "sa": "EZA",
    "tw": "EWT",
    "japan": "EWJ",
    "usa": "IVV",
    "uk": "EWU",
    "eu": "EZU",
    "aus": "EWA",
    "spore": "EWS",
    "can": "EWC",
    "israel": "EIS",
    "brazil": "EWZ",
}

REPORT_COLUMNS = (
    "basket", "n_held", "holding_days", "ibs_window", "execution", "borrow_rate",
    "sharpe", "long_only_sharpe", "short_only_sharpe", "time_in", "market_class",
)


@dataclass(frozen=True)
class UniverseEntry:
    ticker: str
    country: str
    market_class: str


@dataclass(frozen=True)
class Universe:
    entries: tuple[UniverseEntry, ...]

    def __post_init__(self):
        tickers = [e.ticker for e in self.entries]
        if len(set(tickers)) != len(tickers):
            raise ValueError("universe tickers must be unique")
        for e in self.entries:
            if e.market_class not in (EMERGING, DEVELOPED):
                raise ValueError(f"{e.ticker}: unknown market class {e.market_class!r}")

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(e.ticker for e in self.entries)

    def restrict(self, tickers: Iterable[str]) -> "Universe":
        keep = set(tickers)
        return Universe(tuple(e for e in self.entries if e.ticker in keep))


def load_universe(path: str | Path | None = None) -> Universe:
    """Read a ``ticker,country,class`` CSV (``#`` lines are comments); default is the bundled file."""
    if path is None:
        text = resources.files("ibs_bt").joinpath("resources/universe.csv").read_text()
    else:
        text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.DictReader(lines))
    if not rows or set(rows[0]) != {"ticker", "country", "class"}:
        raise ValueError("universe file must have header ticker,country,class")
    return Universe(tuple(UniverseEntry(r["ticker"].strip(), r["country"].strip(), r["class"].strip()) for r in rows))


def classify(ticker: str, universe: Universe) -> str:
    for e in universe.entries:
        if e.ticker == ticker:
            return e.market_class
    raise KeyError(f"ticker {ticker!r} not in universe")


def basket_class(basket: Iterable[str], universe: Universe) -> str:
    classes = {classify(t, universe) for t in basket}
    return classes.pop() if len(classes) == 1 else MIXED


def resolve_basket(names: Iterable[str], available: Iterable[str] | None = None) -> tuple[str, ...]:
    """Map country labels ("india", "tw", ...) or tickers to a sorted ticker tuple.

    "sk" resolves to the first of EWI/EWY present in ``available``.
    """
    avail = set(available) if available is not None else None
    out = []
    for name in names:
        key = name.strip()
        target = COUNTRY_ALIASES.get(key.lower(), key)
        if isinstance(target, tuple):
            choices = [t for t in target if avail is None or t in avail]
            if not choices:
                raise KeyError(f"none of {target} available for {key!r}")
            target = choices[0]
        out.append(target)
    return tuple(sorted(set(out)))


def _tuple_of(value, kind: type, name: str) -> tuple:
    if isinstance(value, str):
        items = [v for v in value.replace(";", ",").split(",") if v.strip()]
    elif isinstance(value, Iterable):
        items = list(value)
    else:
        items = [value]
    return tuple(coerce(v, kind, name) for v in items)


@dataclass(frozen=True)
class SweepSpec:
    basket_size_range: tuple[int, int] = (2, 14)
    n_baskets: int = 100
    rng_seed: int = 0
    n_held: tuple[int, ...] = (1,)
    holding_days: tuple[int, ...] = (1,)
    ibs_window: tuple[int, ...] = (1,)
    execution: tuple[str, ...] = ("close_to_close",)
    borrow_rate: tuple[float, ...] = (0.0001,)
    class_constraint: str = "any"
    family: str = "minmax_basket"
    long_threshold: float = 0.2
    short_threshold: float = 0.8
    slippage_per_side: float = 0.0
    return_basis: str = "raw"
    baskets: tuple[tuple[str, ...], ...] = field(default=())  # fixed baskets; skips random draws

    def __post_init__(self):
        lo, hi = self.basket_size_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad basket size range {self.basket_size_range}")
        if self.n_baskets < 1:
            raise ConfigError("n_baskets must be >= 1")
        if self.class_constraint not in CONSTRAINTS:
            raise ConfigError(f"class_constraint must be one of {', '.join(CONSTRAINTS)}")
        if self.return_basis not in ("raw", "adjusted"):
            raise ConfigError("return_basis must be raw or adjusted")
        for name in ("n_held", "holding_days", "ibs_window", "execution", "borrow_rate"):
            if not getattr(self, name):
                raise ConfigError(f"grid axis {name} is empty")
        self.grid()  # validates every grid point

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "SweepSpec":
        """Build from a flat mapping such as a parsed key=value file.

        Size range may be given as ``basket_size_range=2,14`` or as
        ``basket_size_min``/``basket_size_max``; ``seed`` aliases ``rng_seed``;
        fixed baskets are ``baskets=EWA EWC PIN;EWJ IVV``.
        """
        values = dict(values)
        if "seed" in values and "rng_seed" not in values:
            values["rng_seed"] = values["seed"]
        if "class" in values and "class_constraint" not in values:
            values["class_constraint"] = values["class"]
        kwargs: dict = {}
        lo = values.get("basket_size_min")
        hi = values.get("basket_size_max")
        if values.get("basket_size_range") is not None:
            lo, hi = _tuple_of(values["basket_size_range"], int, "basket_size_range")
        if lo is not None or hi is not None:
            default = cls.__dataclass_fields__["basket_size_range"].default
            kwargs["basket_size_range"] = (
                coerce(lo if lo is not None else default[0], int, "basket_size_min"),
                coerce(hi if hi is not None else default[1], int, "basket_size_max"),
            )
        grid_kinds = {"n_held": int, "holding_days": int, "ibs_window": int, "execution": str, "borrow_rate": float}
        scalar_kinds = {
            "n_baskets": int, "rng_seed": int, "class_constraint": str, "family": str,
            "long_threshold": float, "short_threshold": float, "slippage_per_side": float,
            "return_basis": str,
        }
        for name, kind in grid_kinds.items():
            if values.get(name) is not None:
                kwargs[name] = _tuple_of(values[name], kind, name)
        for name, kind in scalar_kinds.items():
            if values.get(name) is not None:
                kwargs[name] = coerce(values[name], kind, name)
        if values.get("baskets"):
            raw = values["baskets"]
            groups = raw.split(";") if isinstance(raw, str) else raw
            kwargs["baskets"] = tuple(
                resolve_basket(g.replace(",", " ").split() if isinstance(g, str) else g) for g in groups if g
            )
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def grid(self) -> list[tuple[StrategyConfig, CostModel]]:
        """Cartesian grid in a fixed order: N, H, IBS window, execution, borrow rate."""
        out = []
        for n, h, w, ex, br in itertools.product(
            self.n_held, self.holding_days, self.ibs_window, self.execution, self.borrow_rate
        ):
            cfg = StrategyConfig(
                family=self.family, long_threshold=self.long_threshold,
                short_threshold=self.short_threshold, n_held=n, holding_days=h,
                ibs_window=w, execution=ex,
            )
            out.append((cfg, CostModel(br, self.slippage_per_side)))
        return out


@dataclass(frozen=True)
class SweepRow:
    basket: tuple[str, ...]
    config: StrategyConfig
    borrow_rate: float
    sharpe: float | None
    long_only_sharpe: float | None
    short_only_sharpe: float | None
    time_in: float | None
    market_class: str
    grid_index: int = 0
    error: str | None = None

    @property
    def basket_label(self) -> str:
        return " ".join(self.basket)


def eligible_tickers(universe: Universe, spec: SweepSpec, available: Iterable[str] | None = None) -> list[str]:
    wanted = CONSTRAINTS[spec.class_constraint]
    avail = set(available) if available is not None else None
    return sorted(
        e.ticker for e in universe.entries
        if (wanted is None or e.market_class == wanted) and (avail is None or e.ticker in avail)
    )


def draw_baskets(universe: Universe, spec: SweepSpec, available: Iterable[str] | None = None) -> list[tuple[str, ...]]:
    """``n_baskets`` random baskets (sorted ticker tuples), duplicates kept.

    Draw ``i`` uses its own generator seeded with ``(rng_seed, i)``.
    """
    pool = eligible_tickers(universe, spec, available)
    lo, hi = spec.basket_size_range
    if len(pool) < lo:
        raise ConfigError(
            f"{spec.class_constraint}: {len(pool)} eligible tickers, minimum basket size is {lo}"
        )
    if len(pool) < hi:
        logger.warning("%s: capping basket size at %d eligible tickers", spec.class_constraint, len(pool))
        hi = len(pool)
    baskets = []
    for i in range(spec.n_baskets):
        rng = np.random.default_rng([spec.rng_seed, i])
        size = int(rng.integers(lo, hi + 1))
        picks = rng.choice(len(pool), size=size, replace=False)
        baskets.append(tuple(sorted(pool[k] for k in picks)))
    return baskets


def evaluate_basket(
    series: Mapping[str, BarSeries], basket: Sequence[str], spec: SweepSpec, universe: Universe
) -> list[SweepRow]:
    """Rows for one basket at every grid point; failures become flagged rows."""
    basket = tuple(sorted(basket))
    grid = spec.grid()
    try:
        mclass = basket_class(basket, universe)
    except KeyError:
        mclass = ""
    try:
        panel = make_panel(series, basket)
    except Exception as exc:  # noqa: BLE001 - reported on the row
        return [_error_row(basket, cfg, costs, mclass, i, exc) for i, (cfg, costs) in enumerate(grid)]

    ibs_cache: dict = {}
    signal_cache: dict = {}
    rows = []
    for i, (cfg, costs) in enumerate(grid):
        try:
            if cfg.ibs_window not in ibs_cache:
                ibs_cache[cfg.ibs_window] = compute_ibs(panel, cfg.ibs_window)
            key = (cfg.ibs_window, cfg.n_held)
            if key not in signal_cache:
                signal_cache[key] = generate_signals(ibs_cache[cfg.ibs_window], cfg)
            res = run_backtest(panel, signal_cache[key], cfg, costs, spec.return_basis, record_trades=False)
            long_only, short_only = decompose_legs(res)
            rows.append(SweepRow(
                basket, cfg, costs.borrow_rate_daily,
                sharpe_ratio(res.net_return),
                sharpe_ratio(long_only),
                sharpe_ratio(short_only),
                time_in(res.in_market),
                mclass, i,
            ))
        except Exception as exc:  # noqa: BLE001 - a sweep never aborts on one run
            rows.append(_error_row(basket, cfg, costs, mclass, i, exc))
    return rows


def _error_row(basket, cfg, costs, mclass, i, exc) -> SweepRow:
    logger.warning("basket %s grid point %d failed: %s", " ".join(basket), i, exc)
    return SweepRow(basket, cfg, costs.borrow_rate_daily, None, None, None, None, mclass, i, f"{type(exc).__name__}: {exc}")


_WORKER_STATE: dict = {}


def _init_worker(series, spec, universe):
    _WORKER_STATE.update(series=series, spec=spec, universe=universe)


def _eval_in_worker(basket):
    st = _WORKER_STATE
    return evaluate_basket(st["series"], basket, st["spec"], st["universe"])


def rank_key(row: SweepRow):
    return (row.sharpe is None, -(row.sharpe or 0.0), row.basket_label, row.grid_index)


def run_sweep(
    series: Mapping[str, BarSeries],
    spec: SweepSpec,
    universe: Universe | None = None,
    jobs: int = 1,
) -> list[SweepRow]:
    """Evaluate every (basket x grid point) and rank by Sharpe, best first.

    Takes the raw per-ticker series so each basket is aligned on its own
    members only. Duplicate baskets are evaluated once.
    """
    universe = universe or load_universe()
    if spec.baskets:
        baskets = list(spec.baskets)
        missing = sorted({t for b in baskets for t in b} - set(series))
        if missing:
            raise ConfigError(f"no data for tickers: {', '.join(missing)}")
    else:
        baskets = draw_baskets(universe, spec, available=series.keys())
    unique = list(dict.fromkeys(baskets))

    if jobs <= 1 or len(unique) == 1:
        chunks = [evaluate_basket(series, b, spec, universe) for b in unique]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(dict(series), spec, universe)) as pool:
            chunks = list(pool.map(_eval_in_worker, unique, chunksize=max(1, len(unique) // (4 * jobs))))
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=rank_key)
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(rows: Sequence[SweepRow], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in rows:
        c = r.config
        writer.writerow([_fmt(v) for v in (
            r.basket_label, c.n_held, c.holding_days, c.ibs_window, c.execution, r.borrow_rate,
            r.sharpe, r.long_only_sharpe, r.short_only_sharpe, r.time_in, r.market_class,
        )])


def summarize_by_size(rows: Iterable[SweepRow]) -> list[dict]:
    """Mean and median Sharpe per basket size and grid point (size-vs-Sharpe plot data)."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        if r.sharpe is None:
            continue
        c = r.config
        key = (len(r.basket), c.n_held, c.holding_days, c.ibs_window, c.execution, r.borrow_rate)
        groups.setdefault(key, []).append(r.sharpe)
    out = []
    for key in sorted(groups):
        vals = groups[key]
        size, n, h, w, ex, br = key
        out.append({
            "basket_size": size, "n_held": n, "holding_days": h, "ibs_window": w,
            "execution": ex, "borrow_rate": br, "count": len(vals),
            "mean_sharpe": statistics.fmean(vals), "median_sharpe": statistics.median(vals),
        })
    return out
