import pandas as pd

from graph_cache import GraphCache
from models import GraphTag, MarketGraph

TICKERS = ("A", "B", "C")
WEEK = pd.Timestamp("2024-01-08")


def _graph(weights=True):
    return MarketGraph(
        week=WEEK,
        tickers=TICKERS,
        directed=False,
        edges=((1, 2), (0, 1)),
        tag=GraphTag.of("correlation", window=63, threshold=0.3),
        weights=(0.45, -0.31) if weights else None,
    )


def test_put_then_get_restores_graph(tmp_path):
    cache = GraphCache(tmp_path)
    cache.put(_graph(), {"avg_rho": 0.125})
    graph, extras = cache.get(_graph().tag, WEEK, TICKERS)
    assert sorted(graph.edges) == [(0, 1), (1, 2)]
    assert dict(zip(graph.edges, graph.weights)) == {(0, 1): -0.31, (1, 2): 0.45}
    assert extras == {"avg_rho": 0.125}


def test_writes_are_byte_identical(tmp_path):
    cache = GraphCache(tmp_path)
    first = cache.put(_graph()).read_bytes()
    second = cache.put(_graph()).read_bytes()
    assert first == second


def test_corrupt_entry_is_a_miss_and_removed(tmp_path):
    cache = GraphCache(tmp_path)
    path = cache.put(_graph())
    path.write_text("garbage\n", encoding="utf-8")
    assert cache.get(_graph().tag, WEEK, TICKERS) is None
    assert not path.exists()


def test_other_universe_does_not_hit(tmp_path):
    cache = GraphCache(tmp_path)
    cache.put(_graph())
    assert cache.get(_graph().tag, WEEK, ("A", "B", "D")) is None


def test_get_or_build_builds_once(tmp_path):
    cache = GraphCache(tmp_path)
    calls = []

    def build():
        calls.append(1)
        return _graph(weights=False), {}

    cache.get_or_build(_graph().tag, WEEK, TICKERS, build)
    graph, _ = cache.get_or_build(_graph().tag, WEEK, TICKERS, build)
    assert len(calls) == 1
    assert graph.weights is None
