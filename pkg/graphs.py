from __future__ import annotations

import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import GraphError
from graph_cache import GraphCache
from macro import average_pairwise_correlation
from models import GraphStats, GraphTag, MarketGraph
from timeline import week_close_positions

logger = logging.getLogger(__name__)

MIN_OVERLAP = 10


def overlap_floor(window_days: int) -> int:
    """Fewest joint observations a pair needs before its correlation counts."""
    return max(MIN_OVERLAP, int(math.ceil(window_days / 4)))


def rolling_correlation(
    returns: pd.DataFrame,
    week: pd.Timestamp,
    window_days: int,
) -> Tuple[np.ndarray, List[str]]:
    """
    Pearson correlation over the trailing window ending at the week's last trading day.

    Pairs short of the overlap floor get 0, as do stocks flat over the window
    (those are returned as flagged). The diagonal is always 1.
    """
    end = week_close_positions(returns.index, pd.DatetimeIndex([week]))[0]
    block = returns.iloc[max(0, end - window_days + 1) : end + 1]

    corr = block.corr(method="pearson", min_periods=overlap_floor(window_days)).to_numpy(copy=True)
    std = block.std(ddof=1).to_numpy()
    flat = ~(std > 0)
    flagged = [t for t, f in zip(returns.columns, flat) if f and block[t].count() >= 2]
    if flagged:
        logger.debug("Week %s: zero-variance stocks in %d-day window: %s", week.date(), window_days, flagged)

    corr[flat, :] = 0.0
    corr[:, flat] = 0.0
    corr = np.nan_to_num(corr, nan=0.0)
    np.clip(corr, -1.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return corr, flagged


def build_correlation_graph(
    corr: np.ndarray,
    tickers: Sequence[str],
    threshold: float = 0.30,
    week: Optional[pd.Timestamp] = None,
    window_days: Optional[int] = None,
) -> MarketGraph:
    """Undirected edge (i, j), i < j, whenever |rho_ij| >= threshold; rho kept as edge weight."""
    n = len(tickers)
    if corr.shape != (n, n):
        raise GraphError(f"correlation matrix {corr.shape} does not match {n} tickers")
    iu, ju = np.triu_indices(n, k=1)
    rho = corr[iu, ju]
    keep = np.abs(rho) >= threshold
    edges = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))
    return MarketGraph(
        week=week,
        tickers=tuple(tickers),
        directed=False,
        edges=edges,
        tag=GraphTag.of("correlation", window=window_days, threshold=threshold),
        weights=tuple(rho[keep].tolist()),
    )


def graph_stats(graph: MarketGraph, corr: Optional[np.ndarray] = None) -> GraphStats:
    """
    Edge count, density, mean degree and (given the correlation matrix) the
    mean |rho| over all pairs, connected or not.
    """
    n = graph.node_count
    if n < 2:
        raise GraphError("graph statistics need at least two nodes")
    possible = n * (n - 1) if graph.directed else n * (n - 1) / 2
    avg_abs = None
    if corr is not None:
        iu, ju = np.triu_indices(n, k=1)
        avg_abs = float(np.abs(corr[iu, ju]).mean())
    return GraphStats(
        edge_count=graph.edge_count,
        density=graph.edge_count / possible,
        mean_degree=2.0 * graph.edge_count / n,
        avg_abs_rho=avg_abs,
    )


def build_sector_graph(sector_map: Mapping[int, Mapping[str, str]], tickers: Sequence[str], year: int) -> MarketGraph:
    """Union of cliques, one per sector label in force that year."""
    labels = sector_map.get(year, {})
    missing = [t for t in tickers if t not in labels]
    if missing:
        raise GraphError(f"no sector label for {missing[0]} in {year}")
    n = len(tickers)
    edges = tuple(
        (i, j) for i in range(n) for j in range(i + 1, n) if labels[tickers[i]] == labels[tickers[j]]
    )
    return MarketGraph(
        week=None,
        tickers=tuple(tickers),
        directed=False,
        edges=edges,
        tag=GraphTag.of("sector", year=year),
    )


def connected_components(graph: MarketGraph) -> List[List[int]]:
    """Components of the undirected view of the graph, each sorted."""
    parent = list(range(graph.node_count))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for s, d in graph.edges:
        rs, rd = find(s), find(d)
        if rs != rd:
            parent[max(rs, rd)] = min(rs, rd)
    groups: Dict[int, List[int]] = {}
    for i in range(graph.node_count):
        groups.setdefault(find(i), []).append(i)
    return [sorted(g) for _, g in sorted(groups.items())]


def correlation_graph_series(
    returns: pd.DataFrame,
    weeks: pd.DatetimeIndex,
    window_days: int,
    threshold: float,
    cache: Optional[GraphCache] = None,
) -> Tuple[Dict[pd.Timestamp, MarketGraph], pd.DataFrame]:
    """
    One correlation graph per week plus a per-week statistics frame
    (edge_count, density, mean_degree, avg_abs_rho, avg_rho).
    """
    tickers = list(returns.columns)
    tag = GraphTag.of("correlation", window=window_days, threshold=threshold)
    graphs: Dict[pd.Timestamp, MarketGraph] = {}
    rows = []

    for week in weeks:
        def build() -> Tuple[MarketGraph, Dict[str, float]]:
            corr, _ = rolling_correlation(returns, week, window_days)
            graph = build_correlation_graph(corr, tickers, threshold, week, window_days)
            stats = graph_stats(graph, corr)
            return graph, {"avg_abs_rho": stats.avg_abs_rho, "avg_rho": average_pairwise_correlation(corr)}

        if cache is not None:
            graph, extras = cache.get_or_build(tag, week, tickers, build)
        else:
            graph, extras = build()
        graphs[week] = graph
        stats = graph_stats(graph)
        rows.append(
            {
                "week": week,
                "edge_count": stats.edge_count,
                "density": stats.density,
                "mean_degree": stats.mean_degree,
                "avg_abs_rho": extras["avg_abs_rho"],
                "avg_rho": extras["avg_rho"],
            }
        )

    frame = pd.DataFrame(rows).set_index("week")
    logger.info(
        "Built %d correlation graphs (window=%d, threshold=%.2f), mean density %.3f",
        len(graphs), window_days, threshold, frame["density"].mean() if len(frame) else float("nan"),
    )
    return graphs, frame


def sector_graph_series(
    sector_map: Mapping[int, Mapping[str, str]],
    tickers: Sequence[str],
    weeks: pd.DatetimeIndex,
) -> Dict[pd.Timestamp, MarketGraph]:
    """Sector graph per week; rebuilt only when the calendar year changes."""
    by_year: Dict[int, MarketGraph] = {}
    out: Dict[pd.Timestamp, MarketGraph] = {}
    for week in weeks:
        if week.year not in by_year:
            by_year[week.year] = build_sector_graph(sector_map, tickers, week.year)
        out[week] = by_year[week.year]
    return out


def static_graph_series(graph: MarketGraph, weeks: pd.DatetimeIndex) -> Dict[pd.Timestamp, MarketGraph]:
    return {week: graph for week in weeks}


def permuted_graph(graph: MarketGraph, rng: np.random.Generator) -> MarketGraph:
    """Same edge structure with node identities shuffled (a structure-free control)."""
    perm = rng.permutation(graph.node_count)
    edges = set()
    for s, d in graph.edges:
        ps, pd_ = int(perm[s]), int(perm[d])
        if not graph.directed and ps > pd_:
            ps, pd_ = pd_, ps
        edges.add((ps, pd_))
    return MarketGraph(
        week=graph.week,
        tickers=graph.tickers,
        directed=graph.directed,
        edges=tuple(sorted(edges)),
        tag=GraphTag(f"permuted-{graph.tag.family}", graph.tag.params),
    )


def representative_weeks(stats: pd.DataFrame, last_test_week: pd.Timestamp) -> pd.DataFrame:
    """Sparsest week, densest week and the last test week, in that order."""
    picks = [
        ("Sparse week", stats["density"].idxmin()),
        ("Dense week", stats["density"].idxmax()),
        ("Last test week", last_test_week),
    ]
    rows = []
    for label, week in picks:
        row = stats.loc[week]
        rows.append(
            {
                "label": label,
                "week": pd.Timestamp(week).strftime("%Y-%m-%d"),
                "edges": int(row["edge_count"]),
                "density": row["density"],
                "mean_degree": row["mean_degree"],
                "avg_abs_rho": row["avg_abs_rho"],
            }
        )
    return pd.DataFrame(rows)
