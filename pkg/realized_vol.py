from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
import pandas as pd

from errors import DataError
from models import ANNUALIZATION_DAYS, UniversePanel, WeeklyVolPanel
from timeline import calendar_weeks, week_keys

logger = logging.getLogger(__name__)

MIN_WEEK_RETURNS = 3


def log_returns(panel: UniversePanel) -> pd.DataFrame:
    """
    Daily log returns (day x ticker) between consecutive available closes.

    A return after a gap spans the gap; each stock's first close has no return.
    """
    close = panel.close
    bad = (close.notna() & ~(close > 0)).to_numpy()
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataError(f"nonpositive close for {close.columns[j]} on {close.index[i].date()}")

    out = pd.DataFrame(np.nan, index=close.index, columns=close.columns)
    for ticker in close.columns:
        s = close[ticker].dropna()
        if len(s) < 2:
            continue
        r = np.log(s.to_numpy()[1:] / s.to_numpy()[:-1])
        out.loc[s.index[1:], ticker] = r
    return out


def weekly_realized_vol(returns: pd.DataFrame, annualization_days: int = ANNUALIZATION_DAYS) -> WeeklyVolPanel:
    """
    Annualized sample stdev of daily log returns per ISO week.

    Stock-weeks with fewer than three returns are left absent (NaN).
    """
    keys = week_keys(returns.index)
    grouped = returns.groupby(keys)
    std = grouped.std(ddof=1)
    count = grouped.count()
    rv = std.where(count >= MIN_WEEK_RETURNS) * math.sqrt(annualization_days)

    weeks = calendar_weeks(returns.index)
    rv = rv.reindex(weeks)
    rv.index.name = "week"
    return WeeklyVolPanel(weeks=weeks, rv=rv)


def trailing_reduce(
    values: np.ndarray,
    end_positions: np.ndarray,
    window: int,
    reducer: Callable[[np.ndarray], np.ndarray],
    min_count: int,
) -> np.ndarray:
    """
    Apply `reducer` column-wise to the `window` rows ending at each end position.

    values is (days x stocks) with NaN for missing. Windows that start before
    the first row, or hold fewer than min_count finite values, give NaN.
    Output is (len(end_positions) x stocks).
    """
    out = np.full((len(end_positions), values.shape[1]), np.nan)
    for k, end in enumerate(end_positions):
        start = end - window + 1
        if start < 0:
            continue
        block = values[start : end + 1]
        ok = np.isfinite(block).sum(axis=0) >= min_count
        if not ok.any():
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            out[k, ok] = reducer(block[:, ok])
    return out


def nan_sample_std(block: np.ndarray) -> np.ndarray:
    """Column-wise sample (n-1) stdev ignoring NaN; two-pass for exact zeros on constants."""
    n = np.isfinite(block).sum(axis=0)
    mean = np.nansum(block, axis=0) / n
    dev = np.where(np.isfinite(block), block - mean, 0.0)
    return np.sqrt((dev * dev).sum(axis=0) / (n - 1))


def nan_mean(block: np.ndarray) -> np.ndarray:
    n = np.isfinite(block).sum(axis=0)
    return np.nansum(block, axis=0) / n


def nan_sum(block: np.ndarray) -> np.ndarray:
    return np.nansum(block, axis=0)


def trailing_realized_vol(
    returns: np.ndarray,
    end_positions: np.ndarray,
    window: int,
    min_count: int,
    annualization_days: int = ANNUALIZATION_DAYS,
) -> np.ndarray:
    """Annualized sample stdev over trailing windows ending at each position."""
    return trailing_reduce(returns, end_positions, window, nan_sample_std, max(min_count, 2)) * math.sqrt(
        annualization_days
    )


def min_count_for(window: int, tolerance: float) -> int:
    """Smallest number of observations accepted in a window under the coverage tolerance."""
    return max(2, int(math.ceil(window * tolerance)))


def weekly_simple_returns(returns: pd.DataFrame) -> pd.DataFrame:
    """Per-week compounded simple return, exp(sum of log returns) - 1; NaN if no returns that week."""
    keys = week_keys(returns.index)
    grouped = returns.groupby(keys)
    total = grouped.sum(min_count=1)
    out = np.expm1(total)
    out = out.reindex(calendar_weeks(returns.index))
    out.index.name = "week"
    return out
