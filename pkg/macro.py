from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np
import pandas as pd

from errors import FeatureError
from models import ANNUALIZATION_DAYS, MACRO_CHANNELS, MacroSeries, SplitSpec, UniversePanel
from realized_vol import nan_sample_std, trailing_reduce, weekly_realized_vol
from timeline import week_close_positions, week_keys

logger = logging.getLogger(__name__)

FEAR_SCALE = 100.0
FEAR_WINDOW = 21
DEFAULT_TERM_SPREAD = 1.0
DEFAULT_CREDIT_SPREAD = 1.2

MARKET_COLUMNS = ("fear_level", "market_rv", "market_return", "term_spread", "credit_spread")


def market_proxies(
    panel: UniversePanel,
    returns: pd.DataFrame,
    weeks: pd.DatetimeIndex,
    regime: Optional[pd.DataFrame] = None,
    annualization_days: int = ANNUALIZATION_DAYS,
) -> pd.DataFrame:
    """
    Market-level inputs built from the panel itself.

    The equal-weight index stands in for the market; fear level is its
    trailing 21-day annualized vol scaled to index points; spreads come from
    the regime path (per trading day) when there is one. Weeks where the
    index has too few returns carry the previous week's value.
    """
    index_r = returns[panel.tickers].mean(axis=1, skipna=True).to_frame("market")
    market_rv = weekly_realized_vol(index_r, annualization_days).rv["market"].reindex(weeks)
    market_ret = index_r["market"].groupby(week_keys(index_r.index)).sum(min_count=1).reindex(weeks)

    end = week_close_positions(panel.calendar, weeks)
    trailing = trailing_reduce(index_r.to_numpy(), end, FEAR_WINDOW, nan_sample_std, 2)[:, 0]
    fear = FEAR_SCALE * trailing * math.sqrt(annualization_days)

    if regime is not None:
        term = regime["term_spread"].to_numpy()[end]
        credit = regime["credit_spread"].to_numpy()[end]
    else:
        term = np.full(len(weeks), DEFAULT_TERM_SPREAD)
        credit = np.full(len(weeks), DEFAULT_CREDIT_SPREAD)

    frame = pd.DataFrame(
        {
            "fear_level": fear,
            "market_rv": market_rv.to_numpy(),
            "market_return": market_ret.to_numpy(),
            "term_spread": term,
            "credit_spread": credit,
        },
        index=weeks,
    )
    return frame.ffill().bfill()


def average_pairwise_correlation(corr: np.ndarray) -> float:
    """Mean of the off-diagonal entries of a correlation matrix."""
    n = corr.shape[0]
    if n < 2:
        return 0.0
    off = corr[~np.eye(n, dtype=bool)]
    return float(off.mean())


def macro_features(market: pd.DataFrame, avg_corr: pd.Series, density: pd.Series) -> MacroSeries:
    """
    Assemble the eight macro channels in MACRO_CHANNELS order.

    fear_change is the week-on-week difference of fear_level; the first week
    has no predecessor and gets 0.
    """
    weeks = pd.DatetimeIndex(market.index)
    missing_cols = [c for c in MARKET_COLUMNS if c not in market.columns]
    if missing_cols:
        raise FeatureError(f"market inputs lack columns {missing_cols}")

    corr = avg_corr.reindex(weeks)
    dens = density.reindex(weeks)
    inputs = market[list(MARKET_COLUMNS)].assign(avg_pairwise_corr=corr.to_numpy(), graph_density=dens.to_numpy())
    bad = ~np.isfinite(inputs.to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        listed = [str(w.date()) for w in weeks[bad]]
        raise FeatureError(f"macro inputs missing for weeks {listed}")

    fear = inputs["fear_level"].to_numpy(dtype=float)
    fear_change = np.concatenate([[0.0], np.diff(fear)])
    columns = {
        "fear_level": fear,
        "fear_change": fear_change,
        "market_rv": inputs["market_rv"].to_numpy(dtype=float),
        "market_return": inputs["market_return"].to_numpy(dtype=float),
        "term_spread": inputs["term_spread"].to_numpy(dtype=float),
        "credit_spread": inputs["credit_spread"].to_numpy(dtype=float),
        "avg_pairwise_corr": inputs["avg_pairwise_corr"].to_numpy(dtype=float),
        "graph_density": inputs["graph_density"].to_numpy(dtype=float),
    }
    values = np.column_stack([columns[c] for c in MACRO_CHANNELS])
    return MacroSeries(weeks=weeks, values=values)


def normalize_macro(macro: MacroSeries, split: SplitSpec) -> MacroSeries:
    """
    (x - train mean) / train sample stdev per channel, train stats applied to every week.

    A channel flat over the training range is centered only and flagged.
    """
    train = split.mask(macro.weeks, "train")
    if not train.any():
        raise FeatureError("training range has no macro weeks")

    values = np.array(macro.values, dtype=float, copy=True)
    flagged = []
    for c, name in enumerate(MACRO_CHANNELS):
        col = values[train, c]
        mean = col.mean()
        std = col.std(ddof=1) if len(col) > 1 else 0.0
        if np.ptp(col) == 0 or not std > 0:
            values[:, c] = values[:, c] - mean
            flagged.append(name)
            continue
        values[:, c] = (values[:, c] - mean) / std

    if flagged:
        logger.warning("Macro channels flat over training range (centered only): %s", ", ".join(flagged))
    return MacroSeries(weeks=macro.weeks, values=values, normalized=True, flagged=flagged)
