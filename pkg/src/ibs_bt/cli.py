"""
Command-line front end.

    ibs-bt backtest --data-dir data/ --tickers EWJ,PIN,EWT --n-held 1
    ibs-bt sweep    --data-dir data/ --config sweep.cfg --seed 7 --jobs 4
    ibs-bt probe    --data-dir data/ --long-threshold 0.2 --short-threshold 0.8
    ibs-bt ibs      --data-dir data/ --ibs-window 2

Every option can also be set in a flat ``key = value`` file passed with
``--config`` (keys use underscores); flags override the file. Output goes
to ``--out-dir``, then ``IBS_BT_OUT``, then ``./ibs_out``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .backtest import CostModel, buy_and_hold, decompose_legs, run_backtest
from .data import DataError, load_data_dir, make_panel, panel_from_series
from .indicators import compute_ibs, positive_return_probabilities
from .metrics import sharpe_ratio, summarize
from .strategies import ConfigError, StrategyConfig, coerce, generate_signals
from .sweep import SweepSpec, load_universe, run_sweep, summarize_by_size, write_report

logger = logging.getLogger("ibs_bt")

DEFAULT_OUT = "ibs_out"
COMMON_DEFAULTS = {
    "seed": "0",
    "jobs": None,
    "return_basis": "raw",
    "validation": "strict",
    "borrow_rate": "0.0001",
    "slippage": "0",
}


class UsageError(Exception):
    pass


def read_flat_config(path: str | Path) -> dict[str, str]:
    """``key = value`` lines, ``#`` comments, no sections."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {k.strip().replace("-", "_"): v.strip() for k, v in parser["config"].items()}


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(command: str, settings: dict, inputs: list[Path], extra: dict | None = None) -> dict:
    manifest = {
        "command": command,
        "config": settings,
        "inputs": [{"path": str(p), "sha256": _digest(p)} for p in sorted(inputs)],
        "rng_seed": int(settings.get("seed", 0)),
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    return manifest


def _write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _tickers(settings: dict) -> list[str] | None:
    raw = settings.get("tickers")
    if not raw:
        return None
    return [t.strip() for t in str(raw).replace(";", ",").split(",") if t.strip()]


def _out_dir(settings: dict) -> Path:
    out = Path(settings.get("out_dir") or os.environ.get("IBS_BT_OUT") or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(settings: dict):
    data_dir = settings.get("data_dir")
    if not data_dir:
        raise UsageError("--data-dir is required")
    series = load_data_dir(data_dir, _tickers(settings), settings["validation"])
    inputs = [Path(data_dir) / f"{t}.csv" for t in series]
    return series, inputs


def _strategy_config(settings: dict) -> StrategyConfig:
    return StrategyConfig.from_mapping(settings)


def _costs(settings: dict) -> CostModel:
    return CostModel(
        coerce(settings["borrow_rate"], float, "borrow_rate"),
        coerce(settings["slippage"], float, "slippage"),
    )


def cmd_backtest(settings: dict) -> int:
    series, inputs = _load(settings)
    cfg = _strategy_config(settings)
    costs = _costs(settings)
    basis = settings["return_basis"]
    panel = make_panel(series)
    signals = generate_signals(compute_ibs(panel, cfg.ibs_window), cfg)
    result = run_backtest(panel, signals, cfg, costs, basis)
    summary = summarize(result)
    long_only, short_only = decompose_legs(result)

    def _sr(x):
        return sharpe_ratio(x) if len(x) >= 2 else None

    out = _out_dir(settings)
    report = {
        "metrics": summary.to_dict(),
        "legs": {
            "long_only_sharpe": _sr(long_only),
            "short_only_sharpe": _sr(short_only),
            "long_leg_total": float(result.long_leg.sum()),
            "short_leg_total": float(result.short_leg.sum()),
            "borrow_cost_total": float(result.borrow_cost.sum()),
            "slippage_total": float(result.slippage_cost.sum()),
            "short_only_includes_borrow": True,
        },
        "tickers": list(panel.tickers),
        "strategy": cfg.to_dict(),
        "costs": {"borrow_rate_daily": costs.borrow_rate_daily, "slippage_per_side": costs.slippage_per_side},
        "return_basis": basis,
        "flags": list(result.flags),
        "manifest": build_manifest("backtest", settings, inputs),
    }
    records = _csv_text(
        ("date", "net_return", "long_leg", "short_leg", "borrow_cost", "slippage", "in_market"),
        ([d.isoformat()] + [_fmt(float(v)) for v in vals] + [_fmt(bool(m))]
         for d, *vals, m in zip(result.dates, result.net_return, result.long_leg, result.short_leg,
                                result.borrow_cost, result.slippage_cost, result.in_market)),
    )
    equity = _csv_text(("date", "equity"), ((d.isoformat(), _fmt(float(e))) for d, e in zip(result.dates, result.equity_curve)))
    _write(out / "records.csv", records)
    _write(out / "equity.csv", equity)
    if coerce(settings.get("trades", False), bool, "trades"):
        _write(out / "trades.csv", _csv_text(
            ("ticker", "side", "entry_date", "exit_date", "weight"),
            ((t.ticker, t.side, t.entry_date.isoformat(), t.exit_date.isoformat(), _fmt(t.weight)) for t in result.trade_log),
        ))
    if coerce(settings.get("buy_hold", False), bool, "buy_hold"):
        curves = {t: dict(zip(s.dates[1:], buy_and_hold(s, basis).equity_curve)) for t, s in series.items()}
        _write(out / "buy_hold.csv", _csv_text(
            ("date", *curves),
            ([d.isoformat()] + [_fmt(float(curves[t][d])) if d in curves[t] else "" for t in curves] for d in result.dates),
        ))
    _write(out / "summary.json", json.dumps(report, indent=2, default=str) + "\n")

    sr = summary.sharpe
    print(f"sharpe={'n/a' if sr is None else f'{sr:.4f}'} time_in={summary.time_in:.4f} "
          f"total_return={summary.total_return:.4f} max_drawdown={summary.max_drawdown:.4f} "
          f"n_days={summary.n_days} -> {out}")
    return 0


def cmd_sweep(settings: dict) -> int:
    series, inputs = _load(settings)
    universe = load_universe(settings.get("universe"))
    spec_values = dict(settings)
    if "slippage" in settings and "slippage_per_side" not in settings:
        spec_values["slippage_per_side"] = settings["slippage"]
    spec = SweepSpec.from_mapping(spec_values)
    jobs = int(settings.get("jobs") or os.cpu_count() or 1)
    rows = run_sweep(series, spec, universe, jobs=jobs)

    out = _out_dir(settings)
    buf = io.StringIO()
    write_report(rows, buf)
    by_size = summarize_by_size(rows)
    size_cols = ("basket_size", "n_held", "holding_days", "ibs_window", "execution", "borrow_rate",
                 "count", "mean_sharpe", "median_sharpe")
    errors = [f"{r.basket_label} [grid {r.grid_index}]: {r.error}" for r in rows if r.error]
    manifest = build_manifest("sweep", settings, inputs, {
        "spec": {k: v for k, v in spec.to_dict().items()},
        "rows": len(rows),
        "flagged_rows": errors,
    })
    if settings.get("universe"):
        manifest["inputs"].append({"path": settings["universe"], "sha256": _digest(Path(settings["universe"]))})
    _write(out / "sweep.csv", buf.getvalue())
    _write(out / "sweep_by_size.csv", _csv_text(size_cols, ([_fmt(r[c]) for c in size_cols] for r in by_size)))
    _write(out / "manifest.json", json.dumps(manifest, indent=2, default=list) + "\n")

    top = int(settings.get("top") or 10)
    for r in rows[:top]:
        sr = "n/a" if r.sharpe is None else f"{r.sharpe:.3f}"
        c = r.config
        print(f"{sr:>8}  N={c.n_held} H={c.holding_days} w={c.ibs_window} {c.execution} "
              f"borrow={r.borrow_rate:g}  {r.market_class:<9} {r.basket_label}")
    print(f"{len(rows)} rows -> {out / 'sweep.csv'}")
    return 0


def cmd_probe(settings: dict) -> int:
    series, inputs = _load(settings)
    long_thr = coerce(settings.get("long_threshold", 0.2), float, "long_threshold")
    short_thr = coerce(settings.get("short_threshold", 0.8), float, "short_threshold")
    window = coerce(settings.get("ibs_window", 1), int, "ibs_window")
    basis = settings["return_basis"]
    rows = []
    for ticker, s in series.items():
        ibs = compute_ibs(panel_from_series(s), window)
        rows.append(positive_return_probabilities(s, ibs, long_thr, short_thr, basis))
    rows.sort(key=lambda r: (r.p_long is None, -(r.p_long or 0.0), r.ticker))

    out = _out_dir(settings)
    _write(out / "probe.csv", _csv_text(
        ("ticker", "p_long", "n_long", "p_short", "n_short"),
        ((r.ticker, _fmt(r.p_long), r.n_long, _fmt(r.p_short), r.n_short) for r in rows),
    ))
    _write(out / "manifest.json", json.dumps(build_manifest("probe", settings, inputs), indent=2) + "\n")
    for r in rows:
        pl = "n/a" if r.p_long is None else f"{r.p_long:.6f}"
        ps = "n/a" if r.p_short is None else f"{r.p_short:.6f}"
        print(f"{r.ticker:<6} long {pl} ({r.n_long})  short {ps} ({r.n_short})")
    return 0


def cmd_ibs(settings: dict) -> int:
    series, inputs = _load(settings)
    window = coerce(settings.get("ibs_window", 1), int, "ibs_window")
    ibs = compute_ibs(make_panel(series), window)
    out = _out_dir(settings)
    _write(out / "ibs.csv", _csv_text(
        ("date", *ibs.tickers),
        ([d.isoformat()] + [_fmt(float(v)) if v == v else "" for v in row] for d, row in zip(ibs.calendar, ibs.ibs)),
    ))
    _write(out / "manifest.json", json.dumps(build_manifest("ibs", settings, inputs), indent=2) + "\n")
    print(f"{len(ibs.calendar)} dates x {len(ibs.tickers)} tickers -> {out / 'ibs.csv'}")
    return 0


def _opt(p: argparse.ArgumentParser, *flags, **kw) -> None:
    kw.setdefault("default", argparse.SUPPRESS)
    p.add_argument(*flags, **kw)


def _strategy_flags(p: argparse.ArgumentParser, grid: bool = False) -> None:
    many = " (comma-separated list)" if grid else ""
    _opt(p, "--family", help="threshold_single | minmax_basket | topn_basket | threshold_basket")
    _opt(p, "--long-threshold", help="go long below this IBS (default 0.2)")
    _opt(p, "--short-threshold", help="go short above this IBS (default 0.8)")
    _opt(p, "--n-held", help="ETFs per side" + many)
    _opt(p, "--holding-days", help="holding period in days" + many)
    _opt(p, "--ibs-window", help="IBS window in days" + many)
    _opt(p, "--execution", help="close_to_close | open_to_open" + many)
    _opt(p, "--borrow-rate", help="daily borrow rate on short notional, e.g. 0.0001" + many)
    _opt(p, "--slippage", help="cost per side as a fraction of traded notional")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _opt(common, "--data-dir", help="directory of <TICKER>.csv files")
    _opt(common, "--config", help="flat key=value config file")
    _opt(common, "--tickers", help="comma-separated tickers (default: every CSV in data dir)")
    _opt(common, "--seed", help="random seed (default 0)")
    _opt(common, "--jobs", help="worker processes (default: all cores)")
    _opt(common, "--out-dir", help="report directory (fallback: $IBS_BT_OUT, then ./ibs_out)")
    _opt(common, "--return-basis", choices=("raw", "adjusted"))
    _opt(common, "--validation", choices=("strict", "clamp"))
    _opt(common, "-v", "--verbose", action="store_const", const="true")

    parser = argparse.ArgumentParser(prog="ibs-bt", description="IBS mean-reversion backtester")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    bt = sub.add_parser("backtest", parents=[common], help="run one strategy configuration")
    _strategy_flags(bt)
    _opt(bt, "--long-only", action="store_const", const="true", help="drop the short side")
    _opt(bt, "--short-only", action="store_const", const="true", help="drop the long side")
    _opt(bt, "--trades", action="store_const", const="true", help="also write trades.csv")
    _opt(bt, "--buy-hold", action="store_const", const="true", help="also write buy_hold.csv benchmark curves")

    sw = sub.add_parser("sweep", parents=[common], help="random basket search over a parameter grid")
    _strategy_flags(sw, grid=True)
    _opt(sw, "--spec", dest="config", help="sweep spec file (same format as --config)")
    _opt(sw, "--class", dest="class_constraint", choices=("any", "emerging_only", "developed_only"))
    _opt(sw, "--n-baskets", help="number of random baskets")
    _opt(sw, "--basket-size-min")
    _opt(sw, "--basket-size-max")
    _opt(sw, "--baskets", help="fixed baskets, ';'-separated, members space-separated")
    _opt(sw, "--universe", help="ticker,country,class CSV (default: bundled)")
    _opt(sw, "--top", help="rows to print (default 10)")

    pr = sub.add_parser("probe", parents=[common], help="next-day hit rates after IBS extremes")
    _opt(pr, "--long-threshold")
    _opt(pr, "--short-threshold")
    _opt(pr, "--ibs-window")

    ib = sub.add_parser("ibs", parents=[common], help="dump the IBS panel")
    _opt(ib, "--ibs-window")
    return parser


def effective_settings(args: argparse.Namespace) -> dict:
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    from_file = read_flat_config(flags["config"]) if flags.get("config") else {}
    settings = {**COMMON_DEFAULTS, **from_file, **flags}
    return {k: v for k, v in settings.items() if v is not None}


COMMANDS = {"backtest": cmd_backtest, "sweep": cmd_sweep, "probe": cmd_probe, "ibs": cmd_ibs}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = effective_settings(args)
        logging.basicConfig(
            level=logging.INFO if coerce(settings.get("verbose", False), bool, "verbose") else logging.ERROR,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return COMMANDS[args.command](settings)
    except UsageError as exc:
        print(f"ibs-bt: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"ibs-bt {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
