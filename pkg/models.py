from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import DataError, FeatureError, GraphError, PortfolioError

if TYPE_CHECKING:
    from neural import ParamStore

TOOL_VERSION = "volgraph-lab 0.3.0"

ANNUALIZATION_DAYS = 252
WEEKS_PER_YEAR = 52

# Channel order is part of the tensor dump format; append, never reorder.
STOCK_CHANNELS: Tuple[str, ...] = (
    "rv5",
    "rv10",
    "rv21",
    "rv63",
    "rv_ratio",
    "mom5",
    "mom20",
    "logvol5",
    "logvol20",
    "vol_ratio",
)

MACRO_CHANNELS: Tuple[str, ...] = (
    "fear_level",
    "fear_change",
    "market_rv",
    "market_return",
    "term_spread",
    "credit_spread",
    "avg_pairwise_corr",
    "graph_density",
)

BAR_FIELDS: Tuple[str, ...] = ("open", "high", "low", "close", "volume")


@dataclass(frozen=True)
class DailyBar:
    """
    One row of daily OHLCV data for one stock.

    Missing prices are None, never zero.
    """
    ticker: str
    date: date
    open: Optional[float]
    high: Optional[float]
    low: Optional[float]
    close: Optional[float]
    volume: Optional[float]

    def __post_init__(self) -> None:
        if self.close is not None and not self.close > 0:
            raise DataError(f"nonpositive close {self.close} for {self.ticker} on {self.date}")
        if self.volume is not None and self.volume < 0:
            raise DataError(f"negative volume {self.volume} for {self.ticker} on {self.date}")


@dataclass
class UniversePanel:
    """
    Aligned daily bars for N stocks over T trading days.

    bars maps each OHLCV field to a (day x ticker) frame; absent bars are NaN.
    sector_map maps year -> ticker -> sector label.
    """
    tickers: List[str]
    calendar: pd.DatetimeIndex
    bars: Dict[str, pd.DataFrame]
    sector_map: Dict[int, Dict[str, str]]

    def __post_init__(self) -> None:
        if len(self.calendar) > 1 and not (np.diff(self.calendar.asi8) > 0).all():
            raise DataError("panel calendar must be strictly increasing")
        for name, frame in self.bars.items():
            if list(frame.columns) != list(self.tickers) or not frame.index.equals(self.calendar):
                raise DataError(f"bar field '{name}' is not aligned to the panel calendar/tickers")
        for year in sorted({d.year for d in self.calendar}):
            labels = self.sector_map.get(year, {})
            missing = [t for t in self.tickers if t not in labels]
            if missing:
                raise DataError(f"sector_map has no label for {missing[:5]} in {year}")

    @property
    def close(self) -> pd.DataFrame:
        return self.bars["close"]

    @property
    def volume(self) -> pd.DataFrame:
        return self.bars["volume"]

    @property
    def n_stocks(self) -> int:
        return len(self.tickers)

    def select(self, tickers: Sequence[str]) -> "UniversePanel":
        """Sub-panel over the given tickers, keeping their relative order."""
        keep = [t for t in self.tickers if t in set(tickers)]
        return UniversePanel(
            tickers=keep,
            calendar=self.calendar,
            bars={k: v[keep] for k, v in self.bars.items()},
            sector_map={y: {t: m[t] for t in keep} for y, m in self.sector_map.items()},
        )


@dataclass
class WeeklyVolPanel:
    """Annualized weekly realized volatility, weeks keyed by ISO Monday."""
    weeks: pd.DatetimeIndex
    rv: pd.DataFrame  # week x ticker, NaN where the week had < 3 returns

    @property
    def tickers(self) -> List[str]:
        return list(self.rv.columns)

    def to_csv(self, path: str | Path) -> None:
        frame = self.rv.copy()
        frame.index = pd.DatetimeIndex(self.weeks).strftime("%Y-%m-%d")
        frame.index.name = "week"
        long = frame.reset_index().melt(id_vars="week", var_name="ticker", value_name="rv").dropna()
        long = long.sort_values("week", kind="stable")
        long.to_csv(path, index=False, float_format="%.10g")


@dataclass
class StockFeatureCube:
    """Raw or normalized week x stock x channel stock-level features (NaN = invalid)."""
    weeks: pd.DatetimeIndex
    tickers: List[str]
    values: np.ndarray
    channels: Tuple[str, ...] = STOCK_CHANNELS

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.weeks), len(self.tickers), len(STOCK_CHANNELS)):
            raise FeatureError(
                f"stock features must be (weeks, stocks, {len(STOCK_CHANNELS)}), got {self.values.shape}"
            )

    def replace_values(self, values: np.ndarray) -> "StockFeatureCube":
        return StockFeatureCube(self.weeks, self.tickers, values, self.channels)


@dataclass
class SplitSpec:
    """Inclusive, chronologically ordered week ranges."""
    train: Tuple[pd.Timestamp, pd.Timestamp]
    validation: Tuple[pd.Timestamp, pd.Timestamp]
    test: Tuple[pd.Timestamp, pd.Timestamp]

    def __post_init__(self) -> None:
        for name in ("train", "validation", "test"):
            start, end = getattr(self, name)
            if start > end:
                raise FeatureError(f"{name} range starts after it ends: {start} > {end}")
        if not (self.train[1] < self.validation[0] and self.validation[1] < self.test[0]):
            raise FeatureError("split ranges must be disjoint and ordered train < validation < test")

    def mask(self, weeks: pd.DatetimeIndex, name: str) -> np.ndarray:
        start, end = getattr(self, name)
        return np.asarray((weeks >= start) & (weeks <= end))


@dataclass
class MacroSeries:
    """Eight market-level channels per week in MACRO_CHANNELS order."""
    weeks: pd.DatetimeIndex
    values: np.ndarray  # week x 8
    normalized: bool = False
    flagged: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.weeks), len(MACRO_CHANNELS)):
            raise FeatureError(
                f"macro series must be (weeks, {len(MACRO_CHANNELS)}), got {self.values.shape}"
            )
        if not self.normalized:
            corr = self.values[:, MACRO_CHANNELS.index("avg_pairwise_corr")]
            dens = self.values[:, MACRO_CHANNELS.index("graph_density")]
            if np.any(np.abs(corr) > 1 + 1e-12):
                raise FeatureError("average pairwise correlation outside [-1, 1]")
            if np.any((dens < 0) | (dens > 1)):
                raise FeatureError("graph density outside [0, 1]")

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, MACRO_CHANNELS.index(name)]


@dataclass
class FeatureTensor:
    """
    Model-ready features: row w holds features through the end of week w and
    the realized volatility of the following week as target.
    """
    weeks: pd.DatetimeIndex
    target_weeks: pd.DatetimeIndex
    tickers: List[str]
    stock_features: np.ndarray  # W x N x 10, zero where invalid
    macro_features: np.ndarray  # W x 8
    target: np.ndarray  # W x N, zero where missing
    mask: np.ndarray  # W x N: valid features and a target
    feature_mask: np.ndarray  # W x N: valid features (target may be missing)
    split: SplitSpec

    def __post_init__(self) -> None:
        w, n = len(self.weeks), len(self.tickers)
        if self.stock_features.shape != (w, n, len(STOCK_CHANNELS)):
            raise FeatureError(f"stock_features shape {self.stock_features.shape} != {(w, n, len(STOCK_CHANNELS))}")
        if self.macro_features.shape != (w, len(MACRO_CHANNELS)):
            raise FeatureError(f"macro_features shape {self.macro_features.shape} != {(w, len(MACRO_CHANNELS))}")
        if not np.all(self.feature_mask[self.mask]):
            raise FeatureError("mask must be a subset of feature_mask")

    @property
    def n_weeks(self) -> int:
        return len(self.weeks)

    @property
    def n_stocks(self) -> int:
        return len(self.tickers)

    def week_indices(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.split.mask(self.weeks, name))

    def node_inputs(self, week_idx: int, with_macro: bool) -> np.ndarray:
        """N x (10 or 18) input rows for one week; macro channels broadcast to every stock."""
        x = self.stock_features[week_idx]
        if not with_macro:
            return x
        macro = np.broadcast_to(self.macro_features[week_idx], (self.n_stocks, len(MACRO_CHANNELS)))
        return np.concatenate([x, macro], axis=1)


@dataclass(frozen=True)
class GraphTag:
    """Construction rule and its parameters; part of every cache key."""
    family: str
    params: Tuple[Tuple[str, str], ...] = ()

    @classmethod
    def of(cls, family: str, **params: object) -> "GraphTag":
        return cls(family, tuple(sorted((k, str(v)) for k, v in params.items())))

    @property
    def slug(self) -> str:
        parts = [self.family] + [f"{k}={v}" for k, v in self.params]
        return "-".join(parts)


@dataclass
class MarketGraph:
    """
    Edge set over a fixed node order.

    Undirected graphs store each pair once as (i, j) with i < j. Directed
    edges (src, dst) mean src's history informs dst.
    """
    week: Optional[pd.Timestamp]
    tickers: Tuple[str, ...]
    directed: bool
    edges: Tuple[Tuple[int, int], ...]
    tag: GraphTag
    weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        n = len(self.tickers)
        seen = set()
        for src, dst in self.edges:
            if src == dst:
                raise GraphError(f"self-loop on {self.tickers[src]}")
            if not (0 <= src < n and 0 <= dst < n):
                raise GraphError(f"edge ({src}, {dst}) outside the {n}-node universe")
            if not self.directed and src > dst:
                raise GraphError("undirected edges must be stored as (i, j) with i < j")
            if (src, dst) in seen:
                raise GraphError(f"duplicate edge {self.tickers[src]}-{self.tickers[dst]}")
            seen.add((src, dst))
        if self.weights is not None and len(self.weights) != len(self.edges):
            raise GraphError("weights must align with edges")

    @property
    def node_count(self) -> int:
        return len(self.tickers)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def edge_pairs(self) -> List[Tuple[str, str]]:
        return [(self.tickers[s], self.tickers[d]) for s, d in self.edges]

    def aggregation_matrix(self) -> np.ndarray:
        """
        Row-normalized neighbor-mean operator: row i averages i's neighbors
        (in-neighbors when directed). Isolated nodes get a zero row.
        """
        n = self.node_count
        adj = np.zeros((n, n))
        for src, dst in self.edges:
            adj[dst, src] = 1.0
            if not self.directed:
                adj[src, dst] = 1.0
        deg = adj.sum(axis=1, keepdims=True)
        return np.divide(adj, deg, out=np.zeros_like(adj), where=deg > 0)

    def to_csv(self, path: str | Path) -> None:
        rows = {"src": [p[0] for p in self.edge_pairs()], "dst": [p[1] for p in self.edge_pairs()]}
        if self.weights is not None:
            rows["rho"] = list(self.weights)
        pd.DataFrame(rows).to_csv(path, index=False, float_format="%.10g")


@dataclass(frozen=True)
class GraphStats:
    edge_count: int
    density: float
    mean_degree: float
    avg_abs_rho: Optional[float] = None


@dataclass
class ForecastMatrix:
    """
    Predicted next-week volatility. Row w is the forecast made at the end of
    weeks[w] for target_weeks[w].
    """
    model_id: str
    weeks: pd.DatetimeIndex
    target_weeks: pd.DatetimeIndex
    tickers: List[str]
    values: np.ndarray  # W x N
    mask: np.ndarray  # W x N

    def __post_init__(self) -> None:
        self.values = np.where(self.mask, self.values, 0.0)
        if not np.all(np.isfinite(self.values)):
            raise FeatureError(f"forecast '{self.model_id}' has non-finite predictions")
        if np.any(self.values < 0):
            raise FeatureError(f"forecast '{self.model_id}' has negative predictions")

    def to_frame(self) -> pd.DataFrame:
        w_idx, s_idx = np.nonzero(self.mask)
        return pd.DataFrame(
            {
                "model": self.model_id,
                "week": self.weeks[w_idx].strftime("%Y-%m-%d"),
                "ticker": [self.tickers[i] for i in s_idx],
                "pred": self.values[w_idx, s_idx],
            }
        )

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")


@dataclass
class HarModel:
    """OLS coefficients (intercept, b5, b21, b63) per ticker or pooled."""
    mode: str  # "per_stock" | "pooled"
    tickers: List[str]
    coefficients: Dict[str, np.ndarray]  # ticker (or "pooled") -> 4 coefficients

    def __post_init__(self) -> None:
        if self.mode == "pooled" and list(self.coefficients) != ["pooled"]:
            raise FeatureError("pooled HAR stores exactly one coefficient set")


@dataclass(frozen=True)
class EnsembleModel:
    member_ids: Tuple[str, ...]
    weights: Tuple[float, ...]


@dataclass
class WeightMatrix:
    """Target weights per week; exposure < 1 leaves cash earning the risk-free rate."""
    construction: str
    weeks: pd.DatetimeIndex
    tickers: List[str]
    values: np.ndarray  # W x N
    exposure: np.ndarray  # W
    flagged: List[str] = field(default_factory=list)


@dataclass
class PortfolioTrack:
    construction: str
    model_id: str
    weeks: pd.DatetimeIndex  # holding (target) weeks
    gross: np.ndarray
    cost: np.ndarray
    net: np.ndarray
    turnover: np.ndarray
    exposure: np.ndarray
    risk_free: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.turnover < 0):
            raise PortfolioError("turnover must be nonnegative")
        if not np.array_equal(self.net, self.gross - self.cost):
            raise PortfolioError("track violates net = gross - cost")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "week": self.weeks.strftime("%Y-%m-%d"),
                "gross": self.gross,
                "cost": self.cost,
                "net": self.net,
                "turnover": self.turnover,
                "exposure": self.exposure,
                "risk_free": self.risk_free,
            }
        )


@dataclass(frozen=True)
class PortfolioReport:
    model_id: str
    construction: str
    ann_return: float
    ann_vol: float
    sharpe: float
    max_drawdown: float
    avg_turnover: float


@dataclass(frozen=True)
class AccuracyReport:
    model_id: str
    mse: float
    mae: float
    r2: float
    directional_accuracy: float
    n_obs: int


@dataclass
class RankReport:
    model_id: str
    mean_ic: float
    icir: float
    top_quintile_hit_rate: float
    pairwise_accuracy: float
    weekly_ic: pd.Series
    undefined_weeks: int = 0


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    stage_hashes: Dict[str, str]
    tool_version: str = TOOL_VERSION

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "stage_hashes": dict(sorted(self.stage_hashes.items())),
            "tool_version": self.tool_version,
        }


@dataclass
class SageModel:
    """
    Trained GraphSAGE forecaster. Layer l maps [H | neighbor mean of H]
    (width 2 * previous width) to `hidden`, the last layer to one output.
    """
    model_id: str
    store: "ParamStore"
    layers: int
    hidden: int
    dropout: float
    family: str
    with_macro: bool
    directed: bool
    input_width: int
    seed: int
    validation_mse: Optional[float] = None
    epochs_run: int = 0

    def __post_init__(self) -> None:
        if self.directed and self.family != "granger":
            raise GraphError(f"only the Granger family is directed, got family '{self.family}'")


@dataclass
class LstmModel:
    """Two-layer LSTM over four-week feature windows with a linear head on the last hidden state."""
    model_id: str
    store: "ParamStore"
    layers: int
    hidden: int
    dropout: float
    window: int
    seed: int
    with_macro: bool = False
    validation_mse: Optional[float] = None
    epochs_run: int = 0
