from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from errors import CollinearLagsError, GraphError
from models import GraphTag, MarketGraph

logger = logging.getLogger(__name__)


def lag_matrix(x: np.ndarray, lag: int) -> np.ndarray:
    """Rows t = lag..n-1, columns x[t-1], ..., x[t-lag]."""
    n = len(x)
    return np.column_stack([x[lag - k : n - k] for k in range(1, lag + 1)])


def _rss(design: np.ndarray, y: np.ndarray) -> float:
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    return float(resid @ resid)


def _prepare(source: np.ndarray, target: np.ndarray, lag: int) -> Tuple[np.ndarray, np.ndarray]:
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape != target.shape or source.ndim != 1:
        raise GraphError(f"source and target must be aligned 1-d series, got {source.shape} and {target.shape}")
    if len(target) < 10 * lag:
        raise GraphError(f"need at least {10 * lag} aligned observations for lag {lag}, got {len(target)}")
    if not (np.isfinite(source).all() and np.isfinite(target).all()):
        raise GraphError("missing values inside the regression window")
    return source, target


def _restricted(target: np.ndarray, lag: int) -> Tuple[np.ndarray, np.ndarray, float]:
    y = target[lag:]
    design = np.column_stack([np.ones(len(y)), lag_matrix(target, lag)])
    return y, design, _rss(design, y)


def _f_test(
    y: np.ndarray, restricted: np.ndarray, rss_r: float, source: np.ndarray, lag: int
) -> Tuple[float, float]:
    unrestricted = np.column_stack([restricted, lag_matrix(source, lag)])
    if np.linalg.matrix_rank(unrestricted) < unrestricted.shape[1]:
        raise CollinearLagsError()
    rss_u = _rss(unrestricted, y)
    df_resid = len(y) - unrestricted.shape[1]
    if not rss_u > 0 or df_resid < 1:
        raise CollinearLagsError()
    f_stat = max(((rss_r - rss_u) / lag) / (rss_u / df_resid), 0.0)
    return f_stat, float(stats.f.sf(f_stat, lag, df_resid))


def granger_f_test(source: np.ndarray, target: np.ndarray, lag: int = 5) -> Tuple[float, float]:
    """
    F test that `source` lags add predictive power for `target` beyond its own lags.

    Restricted: target on intercept + own lags 1..lag. Unrestricted adds
    source lags 1..lag. F ~ F(lag, n - 2*lag - 1) under the null.
    """
    source, target = _prepare(source, target, lag)
    y, restricted, rss_r = _restricted(target, lag)
    return _f_test(y, restricted, rss_r, source, lag)


@dataclass
class GrangerResult:
    graph: MarketGraph
    pvalues: np.ndarray  # source x target, NaN on the diagonal and for skipped pairs
    skipped: int
    threshold: float


def build_granger_graph(
    returns: pd.DataFrame,
    lag: int = 5,
    alpha: float = 0.05,
) -> GrangerResult:
    """
    Directed edge source -> target when p < alpha / (N (N - 1)).

    Run once over the training days; pairs whose test fails are skipped and
    counted.
    """
    tickers = list(returns.columns)
    n = len(tickers)
    threshold = alpha / (n * (n - 1)) if n > 1 else 0.0
    values = returns.to_numpy(dtype=float)
    pvalues = np.full((n, n), np.nan)
    edges = []
    skipped = 0

    complete = np.isfinite(values).all(axis=1)
    for j in range(n):
        cached: Optional[Tuple[np.ndarray, np.ndarray, float]] = None
        for i in range(n):
            if i == j:
                continue
            rows = np.isfinite(values[:, i]) & np.isfinite(values[:, j])
            try:
                source, target = _prepare(values[rows, i], values[rows, j], lag)
                if np.array_equal(rows, complete):
                    if cached is None:
                        cached = _restricted(target, lag)
                    y, restricted, rss_r = cached
                else:
                    y, restricted, rss_r = _restricted(target, lag)
                _, p = _f_test(y, restricted, rss_r, source, lag)
            except GraphError as exc:
                skipped += 1
                logger.debug("Granger %s -> %s skipped: %s", tickers[i], tickers[j], exc)
                continue
            pvalues[i, j] = p
            if p < threshold:
                edges.append((i, j))

    if skipped:
        logger.warning("Granger graph: %d of %d ordered pairs skipped", skipped, n * (n - 1))
    graph = MarketGraph(
        week=None,
        tickers=tuple(tickers),
        directed=True,
        edges=tuple(sorted(edges)),
        tag=GraphTag.of("granger", lag=lag, alpha=alpha),
    )
    logger.info("Granger graph: %d directed edges at Bonferroni threshold %.3g", graph.edge_count, threshold)
    return GrangerResult(graph=graph, pvalues=pvalues, skipped=skipped, threshold=threshold)
