"""
On-disk cache of constructed graphs.

One file per (universe, construction tag, week):

    <root>/<universe hash>/<tag slug>/<YYYY-MM-DD | static>.edges

Each file starts with `# key=value` header lines (tag, week, universe,
nodes, directed, plus any `meta.*` numbers saved alongside the graph),
then a `src,dst[,weight]` CSV of node indices sorted by (src, dst), so two
writes of the same graph are byte-identical.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import pandas as pd

from models import GraphTag, MarketGraph

logger = logging.getLogger(__name__)

Extras = Dict[str, float]


def universe_hash(tickers: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(tickers).encode("utf-8")).hexdigest()


def _week_name(week: Optional[pd.Timestamp]) -> str:
    return "static" if week is None else pd.Timestamp(week).strftime("%Y-%m-%d")


class CorruptEntry(Exception):
    pass


class GraphCache:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._locks: Dict[Path, threading.Lock] = {}
        self._guard = threading.Lock()

    def path_for(self, tag: GraphTag, week: Optional[pd.Timestamp], tickers: Sequence[str]) -> Path:
        return self.root / universe_hash(tickers)[:16] / tag.slug / f"{_week_name(week)}.edges"

    def _lock(self, path: Path) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(path, threading.Lock())

    def put(self, graph: MarketGraph, extras: Optional[Extras] = None) -> Path:
        path = self.path_for(graph.tag, graph.week, graph.tickers)
        lines = [
            f"# tag={graph.tag.slug}",
            f"# week={_week_name(graph.week)}",
            f"# universe={universe_hash(graph.tickers)}",
            f"# nodes={graph.node_count}",
            f"# directed={int(graph.directed)}",
        ]
        for key in sorted(extras or {}):
            lines.append(f"# meta.{key}={float(extras[key])!r}")

        order = sorted(range(graph.edge_count), key=lambda k: graph.edges[k])
        if graph.weights is None:
            lines.append("src,dst")
            lines.extend(f"{graph.edges[k][0]},{graph.edges[k][1]}" for k in order)
        else:
            lines.append("src,dst,weight")
            lines.extend(f"{graph.edges[k][0]},{graph.edges[k][1]},{graph.weights[k]!r}" for k in order)

        path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock(path):
            tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
            tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
            os.replace(tmp, path)
        return path

    def _parse(self, path: Path, tag: GraphTag, tickers: Sequence[str]) -> Tuple[MarketGraph, Extras]:
        header: Dict[str, str] = {}
        body = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.startswith("# "):
                key, sep, value = line[2:].partition("=")
                if not sep:
                    raise CorruptEntry(f"bad header line {line!r}")
                header[key] = value
            elif line:
                body.append(line)

        for key in ("tag", "week", "universe", "nodes", "directed"):
            if key not in header:
                raise CorruptEntry(f"missing header '{key}'")
        if (
            header["tag"] != tag.slug
            or header["universe"] != universe_hash(tickers)
            or int(header["nodes"]) != len(tickers)
        ):
            raise CorruptEntry("header does not match the requested key")
        if not body or body[0] not in ("src,dst", "src,dst,weight"):
            raise CorruptEntry("missing edge-list column header")

        weighted = body[0] == "src,dst,weight"
        edges, weights = [], []
        for row in body[1:]:
            parts = row.split(",")
            if len(parts) != (3 if weighted else 2):
                raise CorruptEntry(f"bad edge row {row!r}")
            edges.append((int(parts[0]), int(parts[1])))
            if weighted:
                weights.append(float(parts[2]))

        week = None if header["week"] == "static" else pd.Timestamp(header["week"])
        graph = MarketGraph(
            week=week,
            tickers=tuple(tickers),
            directed=bool(int(header["directed"])),
            edges=tuple(edges),
            tag=tag,
            weights=tuple(weights) if weighted else None,
        )
        extras = {k[len("meta."):]: float(v) for k, v in header.items() if k.startswith("meta.")}
        return graph, extras

    def get(
        self, tag: GraphTag, week: Optional[pd.Timestamp], tickers: Sequence[str]
    ) -> Optional[Tuple[MarketGraph, Extras]]:
        """Cached graph and extras, or None on a miss. Corrupt entries are removed and reported as misses."""
        path = self.path_for(tag, week, tickers)
        if not path.exists():
            return None
        try:
            graph, extras = self._parse(path, tag, tickers)
        except Exception as exc:  # noqa: BLE001 - anything unreadable is a corrupt entry
            logger.warning("Corrupt graph cache entry %s (%s); recomputing", path, exc)
            path.unlink(missing_ok=True)
            return None
        if graph.week is not None and week is not None and graph.week != pd.Timestamp(week):
            logger.warning("Graph cache entry %s holds week %s; recomputing", path, graph.week.date())
            return None
        return graph, extras

    def get_or_build(
        self,
        tag: GraphTag,
        week: Optional[pd.Timestamp],
        tickers: Sequence[str],
        build: Callable[[], Tuple[MarketGraph, Extras]],
    ) -> Tuple[MarketGraph, Extras]:
        hit = self.get(tag, week, tickers)
        if hit is not None:
            return hit
        graph, extras = build()
        self.put(graph, extras)
        return graph, extras
