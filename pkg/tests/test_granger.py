import numpy as np
import pandas as pd
import pytest
from scipy.special import betainc

from errors import CollinearLagsError, GraphError
from granger import build_granger_graph, granger_f_test


def _oracle(source, target, lag):
    """Normal-equation OLS and a regularized incomplete beta tail."""
    n = len(target)
    y = target[lag:]
    own = np.column_stack([target[lag - k : n - k] for k in range(1, lag + 1)])
    other = np.column_stack([source[lag - k : n - k] for k in range(1, lag + 1)])
    xr = np.column_stack([np.ones(len(y)), own])
    xu = np.column_stack([xr, other])

    def rss(x):
        beta = np.linalg.solve(x.T @ x, x.T @ y)
        e = y - x @ beta
        return e @ e

    d1, d2 = lag, len(y) - xu.shape[1]
    f = max(((rss(xr) - rss(xu)) / d1) / (rss(xu) / d2), 0.0)
    return f, betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


@pytest.mark.parametrize("case", range(20))
def test_matches_independent_oracle(case):
    rng = np.random.default_rng(100 + case)
    lag = int(rng.integers(1, 6))
    n = int(rng.integers(10 * lag + 20, 400))
    a = rng.standard_normal(n)
    b = rng.standard_normal(n)
    b[1:] += rng.uniform(0.0, 0.3) * a[:-1]
    f, p = granger_f_test(a, b, lag)
    f_ref, p_ref = _oracle(a, b, lag)
    assert f == pytest.approx(f_ref, rel=1e-8, abs=1e-10)
    assert p == pytest.approx(p_ref, rel=1e-8, abs=1e-12)


def test_short_series_rejected():
    x = np.arange(20, dtype=float)
    with pytest.raises(GraphError, match="at least 50"):
        granger_f_test(x, x, 5)


def test_collinear_lags():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(200)
    with pytest.raises(CollinearLagsError):
        granger_f_test(x, x, 2)


def test_independent_noise_gives_sparse_graph():
    rng = np.random.default_rng(2024)
    returns = pd.DataFrame(rng.standard_normal((2000, 10)), columns=[f"S{i}" for i in range(10)])
    result = build_granger_graph(returns, lag=5, alpha=0.05)
    assert result.graph.edge_count <= 2
    assert result.threshold == pytest.approx(0.05 / 90)
    assert result.graph.directed


def test_planted_chain_is_recovered():
    rng = np.random.default_rng(7)
    n = 1000
    a = rng.standard_normal(n)
    b = rng.standard_normal(n)
    c = rng.standard_normal(n)
    b[1:] += 0.6 * a[:-1]
    c[1:] += 0.6 * b[:-1]
    result = build_granger_graph(pd.DataFrame({"A": a, "B": b, "C": c}), lag=2)
    assert (0, 1) in result.graph.edges
    assert (1, 2) in result.graph.edges
    assert result.pvalues[0, 1] < result.threshold


def test_pairs_with_gaps_are_tested_on_overlap():
    rng = np.random.default_rng(3)
    returns = pd.DataFrame(rng.standard_normal((300, 3)), columns=list("ABC"))
    returns.iloc[:280, 2] = np.nan  # C has 20 rows, too few for lag 5
    result = build_granger_graph(returns, lag=5)
    assert result.skipped == 4
    assert np.isfinite(result.pvalues[0, 1])


@pytest.mark.parametrize("seed", range(2))
def test_one_way_lead_gives_one_way_edge(seed):
    rng = np.random.default_rng(seed)
    n = 600
    leader = rng.standard_normal(n)
    follower = 0.1 * rng.standard_normal(n)
    follower[1:] += 0.8 * leader[:-1]
    returns = pd.DataFrame({"L": leader, "F": follower, "Z": rng.standard_normal(n)})
    result = build_granger_graph(returns, lag=2, alpha=0.05)
    assert result.graph.directed
    assert (0, 1) in result.graph.edges
    assert (1, 0) not in result.graph.edges
