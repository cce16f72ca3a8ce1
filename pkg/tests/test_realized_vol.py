import math

import numpy as np
import pandas as pd
import pytest

from errors import DataError
from models import BAR_FIELDS, UniversePanel
from realized_vol import (
    log_returns,
    min_count_for,
    trailing_realized_vol,
    weekly_realized_vol,
    weekly_simple_returns,
)


def _panel(close: pd.DataFrame) -> UniversePanel:
    bars = {f: close.copy() for f in BAR_FIELDS}
    labels = {t: "X" for t in close.columns}
    return UniversePanel(
        tickers=list(close.columns),
        calendar=close.index,
        bars=bars,
        sector_map={y: dict(labels) for y in sorted({d.year for d in close.index})},
    )


def test_returns_span_gaps():
    calendar = pd.bdate_range("2024-01-01", periods=4)
    close = pd.DataFrame({"A": [100.0, 110.0, np.nan, 121.0]}, index=calendar)
    r = log_returns(_panel(close))["A"]
    assert math.isnan(r.iloc[0])
    assert r.iloc[1] == pytest.approx(math.log(1.1))
    assert math.isnan(r.iloc[2])
    assert r.iloc[3] == pytest.approx(math.log(1.1))


def test_nonpositive_close_is_a_data_error():
    calendar = pd.bdate_range("2024-01-01", periods=2)
    close = pd.DataFrame({"A": [100.0, 50.0]}, index=calendar)
    panel = _panel(close)
    panel.bars["close"].iloc[1, 0] = -1.0
    with pytest.raises(DataError, match="nonpositive close"):
        log_returns(panel)


def test_weekly_vol_needs_three_returns():
    calendar = pd.bdate_range("2024-01-01", periods=10)
    returns = pd.DataFrame({"A": [np.nan, 0.01, -0.02, 0.015, 0.0, 0.01, np.nan, np.nan, np.nan, 0.02]}, index=calendar)
    panel = weekly_realized_vol(returns)
    first = np.array([0.01, -0.02, 0.015, 0.0])
    assert panel.rv.loc["2024-01-01", "A"] == pytest.approx(first.std(ddof=1) * math.sqrt(252))
    # second week has only two returns
    assert math.isnan(panel.rv.loc["2024-01-08", "A"])


def test_flat_week_has_zero_vol():
    calendar = pd.bdate_range("2024-01-01", periods=5)
    returns = pd.DataFrame({"A": [np.nan, 0.0, 0.0, 0.0, 0.0]}, index=calendar)
    assert weekly_realized_vol(returns).rv.iloc[0, 0] == 0.0


def test_weekly_simple_returns_compound():
    calendar = pd.bdate_range("2024-01-01", periods=5)
    returns = pd.DataFrame({"A": [np.nan, 0.01, 0.02, -0.01, 0.0]}, index=calendar)
    weekly = weekly_simple_returns(returns)
    assert weekly.loc["2024-01-01", "A"] == pytest.approx(math.exp(0.02) - 1.0)


def test_trailing_vol_respects_coverage():
    r = np.array([[np.nan], [0.01], [0.02], [np.nan], [0.0], [0.01]])
    out = trailing_realized_vol(r, np.array([2, 5]), 5, min_count_for(5, 0.8), 252)
    assert math.isnan(out[0, 0])  # window starts before the first row
    # rows 1..5 hold 4 finite values, min count ceil(5 * 0.8) = 4
    assert out[1, 0] == pytest.approx(np.array([0.01, 0.02, 0.0, 0.01]).std(ddof=1) * math.sqrt(252))


@pytest.mark.parametrize("k", [0.5, 3.0, 17.0])
def test_weekly_vol_scales_with_returns(rng, k):
    calendar = pd.bdate_range("2024-01-01", periods=25)
    returns = pd.DataFrame(rng.normal(0, 0.02, (25, 3)), index=calendar, columns=["A", "B", "C"])
    returns.iloc[0] = np.nan
    base = weekly_realized_vol(returns).rv
    scaled = weekly_realized_vol(returns * k).rv
    np.testing.assert_allclose(scaled.to_numpy(), k * base.to_numpy(), rtol=1e-12, equal_nan=True)


@pytest.mark.parametrize("price", [0.01, 1.0, 42.5, 1e4, 3.3e6])
def test_constant_prices_give_zero_returns_and_vol(price):
    calendar = pd.bdate_range("2024-01-01", periods=15)
    close = pd.DataFrame({"A": np.full(15, price)}, index=calendar)
    returns = log_returns(_panel(close))
    assert (returns["A"].iloc[1:] == 0.0).all()
    rv = weekly_realized_vol(returns).rv["A"]
    assert (rv == 0.0).all()
