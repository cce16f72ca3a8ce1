from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from features import assemble_tensor, normalize_stock_features, stock_features
from ingest_synthetic import SyntheticSpec, regime_path, synthesize_panel
from macro import macro_features, market_proxies, normalize_macro
from models import MACRO_CHANNELS, STOCK_CHANNELS, FeatureTensor, ForecastMatrix, SplitSpec, WeeklyVolPanel
from realized_vol import log_returns, weekly_realized_vol
from timeline import calendar_weeks, split_by_fraction


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_spec():
    return SyntheticSpec(n_stocks=8, n_days=400, seed=3, n_sectors=2, n_neighbors=2)


@pytest.fixture(scope="session")
def small_panel(small_spec):
    return synthesize_panel(small_spec)


@pytest.fixture(scope="session")
def small_returns(small_panel):
    return log_returns(small_panel)


@pytest.fixture(scope="session")
def small_tensor(small_spec, small_panel, small_returns):
    """Feature tensor over the small synthetic panel, flat macro graph inputs."""
    weeks = calendar_weeks(small_panel.calendar)
    split = split_by_fraction(weeks, 0.6, 0.2)
    cube = normalize_stock_features(stock_features(small_panel, small_returns, weeks))
    market = market_proxies(small_panel, small_returns, weeks, regime_path(small_spec, small_panel.calendar))
    flat = pd.Series(0.2, index=weeks)
    macro = normalize_macro(macro_features(market, flat, flat), split)
    return assemble_tensor(cube, macro, weekly_realized_vol(small_returns), split)


def make_tensor(n_weeks: int = 12, n_stocks: int = 5, seed: int = 0) -> FeatureTensor:
    """Random fully valid tensor with a 6/3/3 week split."""
    r = np.random.default_rng(seed)
    weeks = pd.date_range("2021-01-04", periods=n_weeks + 1, freq="W-MON")
    n_train, n_val = n_weeks // 2, n_weeks // 4
    split = SplitSpec(
        train=(weeks[0], weeks[n_train - 1]),
        validation=(weeks[n_train], weeks[n_train + n_val - 1]),
        test=(weeks[n_train + n_val], weeks[n_weeks]),
    )
    mask = np.ones((n_weeks, n_stocks), dtype=bool)
    return FeatureTensor(
        weeks=weeks[:-1],
        target_weeks=weeks[1:],
        tickers=[f"S{i}" for i in range(n_stocks)],
        stock_features=r.standard_normal((n_weeks, n_stocks, len(STOCK_CHANNELS))),
        macro_features=r.standard_normal((n_weeks, len(MACRO_CHANNELS))),
        target=r.uniform(0.1, 0.5, (n_weeks, n_stocks)),
        mask=mask,
        feature_mask=mask.copy(),
        split=split,
    )


def make_forecast(values, model_id: str = "m", start: str = "2021-01-04", mask=None) -> ForecastMatrix:
    values = np.asarray(values, dtype=float)
    weeks = pd.date_range(start, periods=values.shape[0] + 1, freq="W-MON")
    return ForecastMatrix(
        model_id=model_id,
        weeks=weeks[:-1],
        target_weeks=weeks[1:],
        tickers=[f"S{i}" for i in range(values.shape[1])],
        values=values,
        mask=np.ones(values.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool),
    )


def actual_panel(actual, start: str = "2021-01-04") -> WeeklyVolPanel:
    """Weekly vol panel whose row k+1 is the target of forecast row k (row 0 is the first origin week)."""
    actual = np.asarray(actual, dtype=float)
    weeks = pd.date_range(start, periods=actual.shape[0], freq="W-MON")
    frame = pd.DataFrame(actual, index=weeks, columns=[f"S{i}" for i in range(actual.shape[1])])
    return WeeklyVolPanel(weeks=weeks, rv=frame)
