from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from backtest import report as portfolio_report
from backtest import simulate
from config import (
    ExperimentConfig,
    RosterEntry,
    config_hash,
    echo_config,
    grid_space,
    grid_thresholds,
    synthetic_seed,
    validate_config,
)
from ensemble import fit_ensemble, predict_ensemble
from errors import ConfigError, StageError, VolLabError
from evaluation import accuracy, dispersion_table, rank_report, validation_mse, weekly_ic_frame
from features import assemble_tensor, normalize_stock_features, save_tensor, stock_features
from granger import build_granger_graph
from graph_cache import GraphCache
from graphs import correlation_graph_series, representative_weeks, sector_graph_series, static_graph_series
from grid_search import expand_grid, grid_search
from har import fit_predict_har, har_features
from ingest_prices import filter_universe, load_panel
from ingest_rates import constant_risk_free, load_market_inputs, load_risk_free
from ingest_synthetic import SyntheticSpec, regime_path, synthesize_panel
from lstm import predict_lstm, train_lstm
from macro import macro_features, market_proxies, normalize_macro
from models import ForecastMatrix, MarketGraph, RunManifest, WeightMatrix
from portfolio import CONSTRUCTIONS, build_weights
from realized_vol import log_returns, weekly_realized_vol, weekly_simple_returns
from report_tables import EQUAL_WEIGHT_ID, build_tables, read_tables, summarize_tables, write_tables
from sage import predict_sage, train_sage
from stage_cache import StageCache, resolve_cache_dir, stage_key
from timeline import calendar_weeks, days_through, split_by_dates, split_by_fraction, week_close_positions

logger = logging.getLogger(__name__)

STAGES = ("data", "graphs", "features", "models", "evaluate", "backtest", "report")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_STAGE = 2


def file_slug(model_id: str) -> str:
    """Roster ids carry ':' and '+'; keep file names portable."""
    return model_id.replace(":", "_").replace("+", "_")


def _run_stage(name: str, fn: Callable[[], Any]) -> Any:
    try:
        return fn()
    except StageError:
        raise
    except VolLabError as exc:
        raise StageError(name, str(exc)) from exc


@dataclass
class RunState:
    """Everything the stages hand to one another, plus the keys for the manifest."""
    cfg: ExperimentConfig
    out_dir: Path
    cache: StageCache
    keys: Dict[str, str] = field(default_factory=dict)
    data: Dict[str, Any] = field(default_factory=dict)
    graphs: Dict[str, Any] = field(default_factory=dict)
    tensor: Any = None
    forecasts: Dict[str, ForecastMatrix] = field(default_factory=dict)
    evaluation: Dict[str, Any] = field(default_factory=dict)
    portfolios: Dict[str, Any] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)


# ---------------------------------------------------------------------
# Stage: data
# ---------------------------------------------------------------------
def _load_data(cfg: ExperimentConfig) -> Dict[str, Any]:
    ann = cfg.features.annualization_days
    if cfg.data.source == "synthetic":
        s = cfg.data.synthetic
        spec = SyntheticSpec(
            n_stocks=s.n_stocks,
            n_days=s.n_days,
            seed=synthetic_seed(cfg),
            spillover_strength=s.spillover_strength,
            n_sectors=s.n_sectors,
            n_neighbors=s.n_neighbors,
            start_date=s.start_date.isoformat(),
        )
        panel = synthesize_panel(spec)
        regime = regime_path(spec, panel.calendar)
    else:
        panel = load_panel(cfg.data.path, cfg.data.format, cfg.data.sectors_path)
        regime = None

    panel = filter_universe(panel, cfg.data.min_coverage)
    returns = log_returns(panel)
    weeks = calendar_weeks(panel.calendar)

    market = market_proxies(panel, returns, weeks, regime, ann)
    if cfg.data.market_inputs_path:
        external = load_market_inputs(cfg.data.market_inputs_path)
        market.update(external.reindex(weeks))
        logger.info("Market inputs from %s replace proxies where present", cfg.data.market_inputs_path)

    sp = cfg.split
    if sp.train_end is not None:
        split = split_by_dates(weeks, pd.Timestamp(sp.train_end), pd.Timestamp(sp.validation_end))
    else:
        split = split_by_fraction(weeks, sp.train_fraction, sp.validation_fraction)

    return {
        "panel": panel,
        "returns": returns,
        "weeks": weeks,
        "weekly_rv": weekly_realized_vol(returns, ann),
        "weekly_returns": weekly_simple_returns(returns),
        "market": market,
        "split": split,
    }


# ---------------------------------------------------------------------
# Stage: graphs
# ---------------------------------------------------------------------
def _correlation_thresholds(cfg: ExperimentConfig) -> List[float]:
    thresholds = {cfg.graphs.threshold}
    if cfg.models.grid.enabled:
        thresholds |= set(grid_thresholds(cfg))
    return sorted(thresholds)


def _build_graphs(cfg: ExperimentConfig, data: Dict[str, Any], graph_cache: GraphCache) -> Dict[str, Any]:
    panel, returns, weeks, split = data["panel"], data["returns"], data["weeks"], data["split"]
    families = {e.family for e in cfg.roster() if e.kind == "sage"}

    correlation: Dict[Tuple[int, float], Dict[pd.Timestamp, MarketGraph]] = {}
    stats: Dict[Tuple[int, float], pd.DataFrame] = {}
    for window in cfg.correlation_windows():
        for threshold in _correlation_thresholds(cfg):
            correlation[(window, threshold)], stats[(window, threshold)] = correlation_graph_series(
                returns[panel.tickers], weeks, window, threshold, graph_cache
            )

    out: Dict[str, Any] = {"correlation": correlation, "stats": stats, "sector": None, "granger": None}
    if "sector" in families:
        out["sector"] = sector_graph_series(panel.sector_map, panel.tickers, weeks)
    if "granger" in families:
        train_days = days_through(panel.calendar, split.train[1])
        result = build_granger_graph(
            returns[panel.tickers].iloc[train_days], cfg.graphs.granger_lag, cfg.graphs.granger_alpha
        )
        out["granger"] = result
        out["granger_series"] = static_graph_series(result.graph, weeks)
    return out


def _density_stats(cfg: ExperimentConfig, graphs: Dict[str, Any]) -> pd.DataFrame:
    return graphs["stats"][(cfg.graphs.density_window, cfg.graphs.threshold)]


# ---------------------------------------------------------------------
# Stage: features
# ---------------------------------------------------------------------
def _build_features(cfg: ExperimentConfig, data: Dict[str, Any], graphs: Dict[str, Any]):
    f = cfg.features
    cube = stock_features(data["panel"], data["returns"], data["weeks"], f.coverage_tolerance, f.annualization_days)
    cube = normalize_stock_features(cube, f.winsor_lower, f.winsor_upper)
    density = _density_stats(cfg, graphs)
    macro = macro_features(data["market"], density["avg_rho"], density["density"])
    macro = normalize_macro(macro, data["split"])
    return assemble_tensor(cube, macro, data["weekly_rv"], data["split"])


# ---------------------------------------------------------------------
# Stage: models
# ---------------------------------------------------------------------
def _graph_series(cfg: ExperimentConfig, graphs: Dict[str, Any], entry: RosterEntry, threshold: Optional[float] = None):
    if entry.family == "correlation":
        return graphs["correlation"][(entry.window, cfg.graphs.threshold if threshold is None else threshold)]
    if entry.family == "sector":
        return graphs["sector"]
    return graphs["granger_series"]


def _train_sage_entry(cfg: ExperimentConfig, state: RunState, entry: RosterEntry) -> Dict[str, Any]:
    t = cfg.models.training
    tensor = state.tensor

    def fit(cell: Dict[str, Any]):
        model = train_sage(
            tensor,
            _graph_series(cfg, state.graphs, entry, cell.get("threshold")),
            family=entry.family,
            with_macro=entry.macro,
            hidden=int(cell.get("hidden", t.hidden)),
            layers=int(cell.get("layers", t.layers)),
            dropout_rate=float(cell.get("dropout", t.dropout)),
            lr=float(cell.get("lr", t.lr)),
            max_epochs=t.max_epochs,
            patience=t.patience,
            seed=cfg.seed,
            model_id=entry.name,
        )
        return model.validation_mse, model

    grid = None
    if cfg.models.grid.enabled:
        grid = grid_search(
            expand_grid(grid_space(cfg, entry.family)),
            fit,
            workers=cfg.models.grid.workers,
            family=entry.name,
        )
        model, threshold = grid.artifact(), grid.selected.get("threshold")
    else:
        _, model = fit({})
        threshold = None
    forecast = predict_sage(model, tensor, _graph_series(cfg, state.graphs, entry, threshold))
    return {"model": model, "forecast": forecast, "grid": grid}


def _train_entry(cfg: ExperimentConfig, state: RunState, entry: RosterEntry) -> Dict[str, Any]:
    tensor = state.tensor
    t = cfg.models.training
    if entry.kind in ("har_per_stock", "har_pooled"):
        data = state.data
        end = week_close_positions(data["panel"].calendar, tensor.weeks)
        feats = har_features(
            data["returns"][tensor.tickers].to_numpy(),
            end,
            cfg.models.har_proxy,
            cfg.features.coverage_tolerance,
            cfg.features.annualization_days,
        )
        model, forecast = fit_predict_har(tensor, feats, entry.kind[len("har_"):])
        return {"model": model, "forecast": forecast, "grid": None}
    if entry.kind == "lstm":
        model = train_lstm(
            tensor,
            hidden=t.lstm_hidden,
            layers=t.lstm_layers,
            dropout_rate=t.dropout,
            lr=t.lr,
            max_epochs=t.max_epochs,
            patience=t.patience,
            batch_size=t.lstm_batch_size,
            window=t.lstm_window,
            seed=cfg.seed,
            with_macro=entry.macro,
            model_id=entry.name,
        )
        return {"model": model, "forecast": predict_lstm(model, tensor), "grid": None}
    if entry.kind == "sage":
        return _train_sage_entry(cfg, state, entry)
    raise StageError("models", f"unhandled roster entry '{entry.name}'")


def _run_models(state: RunState) -> None:
    cfg = state.cfg
    section = {
        "training": cfg.section("models")["training"],
        "har_proxy": cfg.models.har_proxy,
        "grid": cfg.section("models")["grid"],
        "seed": cfg.seed,
    }
    upstream = [state.keys["features"], state.keys["graphs"]]
    results: Dict[str, Dict[str, Any]] = {}
    roster = cfg.roster()

    for entry in [e for e in roster if e.kind != "ensemble"]:
        key, value = state.cache.run(
            f"model:{entry.name}", upstream, {**section, "entry": entry.name},
            lambda entry=entry: _train_entry(cfg, state, entry),
        )
        state.keys[f"model:{entry.name}"] = key
        results[entry.name] = value

    split, weekly_rv = state.data["split"], state.data["weekly_rv"]
    for entry in [e for e in roster if e.kind == "ensemble"]:
        member_ids = cfg.ensemble_members(entry)

        def combine(entry=entry, member_ids=member_ids) -> Dict[str, Any]:
            members = [results[m]["forecast"] for m in member_ids]
            model = fit_ensemble(members, [validation_mse(m, weekly_rv, split) for m in members])
            return {"model": model, "forecast": predict_ensemble(model, members, entry.name), "grid": None}

        key, value = state.cache.run(
            f"model:{entry.name}", [state.keys[f"model:{m}"] for m in member_ids], {"entry": entry.name}, combine
        )
        state.keys[f"model:{entry.name}"] = key
        results[entry.name] = value

    state.forecasts = {name: r["forecast"] for name, r in results.items()}
    state.evaluation["grids"] = {name: r["grid"] for name, r in results.items() if r["grid"] is not None}
    state.keys["models"] = stage_key("models", [state.keys[f"model:{e.name}"] for e in roster], {})


# ---------------------------------------------------------------------
# Stage: evaluate / backtest
# ---------------------------------------------------------------------
def _evaluate(state: RunState) -> Dict[str, Any]:
    weekly_rv, split = state.data["weekly_rv"], state.data["split"]
    acc = [accuracy(f, weekly_rv, split.test) for _, f in sorted(state.forecasts.items())]
    ranks = {mid: rank_report(f, weekly_rv, split.test) for mid, f in sorted(state.forecasts.items())}
    density = _density_stats(state.cfg, state.graphs)["density"]
    return {
        "accuracy": acc,
        "ranking": [ranks[mid] for mid in sorted(ranks)],
        "weekly_ic": weekly_ic_frame(ranks),
        "dispersion": dispersion_table(state.forecasts, density, split.test),
    }


def _risk_free(cfg: ExperimentConfig, weeks: pd.DatetimeIndex) -> pd.Series:
    if cfg.portfolio.risk_free_path:
        return load_risk_free(cfg.portfolio.risk_free_path)
    return constant_risk_free(weeks, cfg.portfolio.risk_free_annual)


def _equal_weight_forecast(tensor) -> ForecastMatrix:
    return ForecastMatrix(
        model_id=EQUAL_WEIGHT_ID,
        weeks=tensor.weeks,
        target_weeks=tensor.target_weeks,
        tickers=list(tensor.tickers),
        values=np.zeros(tensor.mask.shape),
        mask=tensor.mask.copy(),
    )


def _backtest(state: RunState) -> Dict[str, Any]:
    cfg, data = state.cfg, state.data
    p = cfg.portfolio
    test = data["split"].test
    rf = _risk_free(cfg, data["weeks"])
    params = dict(cap=p.cap, vol_target=p.vol_target, leverage_cap=p.leverage_cap, vol_target_base=p.vol_target_base)

    weights: Dict[Tuple[str, str], WeightMatrix] = {}
    tracks = {}
    reports: Dict[str, List] = {c: [] for c in CONSTRUCTIONS}

    equal = build_weights("equal", _equal_weight_forecast(state.tensor), test, **params)
    track = simulate(equal, data["weekly_returns"], rf, p.cost_rate, EQUAL_WEIGHT_ID)
    weights[(EQUAL_WEIGHT_ID, "equal")], tracks[(EQUAL_WEIGHT_ID, "equal")] = equal, track
    equal_report = portfolio_report(track)
    for construction in CONSTRUCTIONS:
        reports[construction].append(equal_report)

    for model_id, forecast in sorted(state.forecasts.items()):
        for construction in CONSTRUCTIONS:
            w = build_weights(construction, forecast, test, **params)
            track = simulate(w, data["weekly_returns"], rf, p.cost_rate, model_id)
            weights[(model_id, construction)], tracks[(model_id, construction)] = w, track
            reports[construction].append(portfolio_report(track))
    return {"weights": weights, "tracks": tracks, "reports": reports}


# ---------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------
def _csv(frame: pd.DataFrame, path: Path, index: bool = False) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=index, float_format="%.10g", lineterminator="\n")


def _export_data(state: RunState) -> None:
    state.data["weekly_rv"].to_csv(state.out_dir / "weekly_rv.csv")


def _export_graphs(state: RunState) -> None:
    cfg, graphs, out = state.cfg, state.graphs, state.out_dir / "graphs"
    last_test = state.data["split"].test[1]
    for (window, threshold), frame in sorted(graphs["stats"].items()):
        stem = f"correlation_w{window}_t{threshold:g}"
        stats = frame.copy()
        stats.index = pd.DatetimeIndex(stats.index).strftime("%Y-%m-%d")
        _csv(stats, out / f"stats_{stem}.csv", index=True)
        _csv(representative_weeks(frame, last_test), out / f"representative_{stem}.csv")
        series = graphs["correlation"][(window, threshold)]
        if last_test in series:
            out.mkdir(parents=True, exist_ok=True)
            series[last_test].to_csv(out / f"edges_{stem}_{last_test.strftime('%Y-%m-%d')}.csv")
    if graphs.get("sector"):
        graph = graphs["sector"][last_test]
        out.mkdir(parents=True, exist_ok=True)
        graph.to_csv(out / f"edges_sector_{last_test.year}.csv")
    if graphs.get("granger") is not None:
        result = graphs["granger"]
        out.mkdir(parents=True, exist_ok=True)
        result.graph.to_csv(out / "edges_granger.csv")
        tickers = list(result.graph.tickers)
        _csv(pd.DataFrame(result.pvalues, index=tickers, columns=tickers), out / "granger_pvalues.csv", index=True)
    logger.debug("Graph exports written for %s", cfg.graphs.windows)


def _export_models(state: RunState) -> None:
    out = state.out_dir / "forecasts"
    out.mkdir(parents=True, exist_ok=True)
    for model_id, forecast in sorted(state.forecasts.items()):
        forecast.to_csv(out / f"{file_slug(model_id)}.csv")
    grids = state.evaluation.get("grids", {})
    if grids:
        (state.out_dir / "grids").mkdir(parents=True, exist_ok=True)
    for model_id, grid in sorted(grids.items()):
        grid.to_csv(state.out_dir / "grids" / f"{file_slug(model_id)}.csv")


def _export_evaluation(state: RunState, evaluation: Dict[str, Any]) -> None:
    ic = evaluation["weekly_ic"].copy()
    ic.index = pd.DatetimeIndex(ic.index).strftime("%Y-%m-%d")
    ic.index.name = "week"
    _csv(ic, state.out_dir / "weekly_ic.csv", index=True)
    _csv(evaluation["dispersion"], state.out_dir / "dispersion.csv")


def _export_portfolios(state: RunState, backtest: Dict[str, Any]) -> None:
    out = state.out_dir / "portfolios"
    for (model_id, construction), w in sorted(backtest["weights"].items()):
        frame = pd.DataFrame(w.values, index=w.weeks.strftime("%Y-%m-%d"), columns=w.tickers)
        frame.index.name = "week"
        frame["exposure"] = w.exposure
        stem = f"{file_slug(model_id)}_{construction}"
        _csv(frame, out / f"{stem}_weights.csv", index=True)
        _csv(backtest["tracks"][(model_id, construction)].to_frame(), out / f"{stem}_track.csv")


def write_manifest(state: RunState) -> Path:
    manifest = RunManifest(config_hash=config_hash(state.cfg), seed=state.cfg.seed, stage_hashes=dict(state.keys))
    path = state.out_dir / "manifest.json"
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------
# Wrapper that Streamlit (or any UI) can call directly
# ---------------------------------------------------------------------
def run_engine_for_config(
    cfg: ExperimentConfig,
    out_dir: Optional[str | Path] = None,
    stop_after: Optional[str] = None,
) -> Dict[str, Any]:
    """
    Run the pipeline for a validated config and return structured results.

    Every stage is cached by content hash under the cache directory and
    skipped when its inputs are unchanged. Exports are written as each stage
    finishes, so a failing stage leaves earlier outputs in place. No argparse,
    no printing.
    """
    if stop_after is not None and stop_after not in STAGES:
        raise StageError(stop_after, f"unknown stage (expected one of {', '.join(STAGES)})")
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache_root = resolve_cache_dir(cfg.cache_dir, out)
    state = RunState(cfg=cfg, out_dir=out, cache=StageCache(cache_root))
    (out / "config.yaml").write_text(echo_config(cfg), encoding="utf-8")
    last = STAGES.index(stop_after) if stop_after else len(STAGES) - 1

    def done(stage: str) -> bool:
        return STAGES.index(stage) >= last

    data_section = {
        "data": cfg.section("data"),
        "split": cfg.section("split"),
        "seed": synthetic_seed(cfg),
        "annualization_days": cfg.features.annualization_days,
    }
    state.keys["data"], state.data = _run_stage(
        "data", lambda: state.cache.run("data", [], data_section, lambda: _load_data(cfg))
    )
    _export_data(state)
    logger.info("Stage data: %d stocks, %d weeks", len(state.data["panel"].tickers), len(state.data["weeks"]))

    if not done("data"):
        graph_cache = GraphCache(cache_root / "graph_edges")
        graph_section = {
            "graphs": cfg.section("graphs"),
            "windows": cfg.correlation_windows(),
            "thresholds": _correlation_thresholds(cfg),
            "families": sorted({e.family for e in cfg.roster() if e.kind == "sage"}),
        }
        state.keys["graphs"], state.graphs = _run_stage(
            "graphs",
            lambda: state.cache.run(
                "graphs", [state.keys["data"]], graph_section, lambda: _build_graphs(cfg, state.data, graph_cache)
            ),
        )
        _export_graphs(state)

    if not done("graphs"):
        state.keys["features"], state.tensor = _run_stage(
            "features",
            lambda: state.cache.run(
                "features",
                [state.keys["data"], state.keys["graphs"]],
                cfg.section("features"),
                lambda: _build_features(cfg, state.data, state.graphs),
            ),
        )
        save_tensor(state.tensor, out / "features.npz")

    if not done("features"):
        _run_stage("models", lambda: _run_models(state))
        _export_models(state)

    evaluation: Dict[str, Any] = {}
    if not done("models"):
        state.keys["evaluate"], evaluation = _run_stage(
            "evaluate",
            lambda: state.cache.run(
                "evaluate", [state.keys["data"], state.keys["models"]], {"range": "test"}, lambda: _evaluate(state)
            ),
        )
        _export_evaluation(state, evaluation)

    backtest: Dict[str, Any] = {}
    if not done("evaluate"):
        state.keys["backtest"], backtest = _run_stage(
            "backtest",
            lambda: state.cache.run(
                "backtest", [state.keys["data"], state.keys["models"]], cfg.section("portfolio"),
                lambda: _backtest(state),
            ),
        )
        _export_portfolios(state, backtest)

    if not done("backtest"):
        def make_tables() -> Dict[str, pd.DataFrame]:
            return build_tables(evaluation["accuracy"], evaluation["ranking"], backtest["reports"], cfg.models.roster)

        state.tables = _run_stage("report", make_tables)
        state.keys["report"] = stage_key("report", [state.keys["evaluate"], state.keys["backtest"]], {})
        write_tables(state.tables, out)

    manifest = write_manifest(state)
    return {
        "out_dir": out,
        "manifest": json.loads(manifest.read_text(encoding="utf-8")),
        "stages_run": [s for s in STAGES if s in state.keys],
        "forecasts": sorted(state.forecasts),
        "tables": state.tables,
        "summary": summarize_tables(state.tables),
    }


# ---------------------------------------------------------------------
# CLI entry point
# ---------------------------------------------------------------------
def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Weekly volatility forecasting lab")
    parser.add_argument("verb", choices=("validate", "run", "report", "clean"))
    parser.add_argument("--config", default="configs/default.yaml", help="Experiment YAML (default: configs/default.yaml)")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--stage", choices=STAGES, default=None, help="Run stages up to and including this one")
    parser.add_argument("--out", default=None, help="Output directory (default: the config's output_dir)")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="Logging level (default: INFO)",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = validate_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"Config {args.config} is invalid:", file=sys.stderr)
        for line in exc.diagnostics:
            print(f"  - {line}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out or cfg.output_dir)

    if args.verb == "validate":
        print(echo_config(cfg), end="")
        return EXIT_OK

    if args.verb == "clean":
        removed = StageCache(resolve_cache_dir(cfg.cache_dir, out_dir)).clear()
        print(f"Removed {removed} cached files.")
        return EXIT_OK

    if args.verb == "report":
        tables = read_tables(out_dir)
        if not tables:
            print(f"No result tables under {out_dir}; run the pipeline first.", file=sys.stderr)
            return EXIT_STAGE
        for name, table in tables.items():
            print(f"\n=== {name.upper()} ===\n")
            print(table.to_string(index=False))
        print("\n" + summarize_tables(tables))
        return EXIT_OK

    print(f"Running {args.config} (seed {cfg.seed}) into '{out_dir}'...\n")
    try:
        result = run_engine_for_config(cfg, out_dir, args.stage)
    except StageError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_STAGE

    print(f"Stages completed: {', '.join(result['stages_run'])}")
    if result["tables"]:
        print("\n=== SUMMARY ===\n")
        print(result["summary"])
    print(f"\nManifest: {Path(result['out_dir']) / 'manifest.json'}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
