from __future__ import annotations

import logging
import math

import numpy as np
import pandas as pd

from errors import PortfolioError
from models import WEEKS_PER_YEAR, PortfolioReport, PortfolioTrack, WeightMatrix

logger = logging.getLogger(__name__)

MIN_REPORT_WEEKS = 8
DEFAULT_COST_RATE = 0.0010


def simulate(
    weights: WeightMatrix,
    returns: pd.DataFrame,
    risk_free: pd.Series,
    cost_rate: float = DEFAULT_COST_RATE,
    model_id: str = "",
) -> PortfolioTrack:
    """
    Weekly rebalance to the target weights.

    returns holds simple returns per (holding week, ticker); risk_free the
    weekly rate per holding week. Turnover is measured on target weights, the
    first week from an all-cash start. Unallocated exposure earns the risk-free rate.
    """
    if cost_rate < 0:
        raise PortfolioError(f"cost rate must be nonnegative, got {cost_rate}")
    missing_tickers = [t for t in weights.tickers if t not in returns.columns]
    if missing_tickers:
        raise PortfolioError(f"no returns for tickers {missing_tickers[:5]}")
    r = returns[weights.tickers].reindex(weights.weeks).to_numpy(dtype=float)
    rf = risk_free.reindex(weights.weeks).to_numpy(dtype=float)
    if not np.isfinite(rf).all():
        week = weights.weeks[~np.isfinite(rf)][0]
        raise PortfolioError(f"no risk-free rate for week {week.date()}")

    held = weights.values != 0
    gap = held & ~np.isfinite(r)
    if gap.any():
        w, n = np.argwhere(gap)[0]
        raise PortfolioError(f"missing return for held stock ({weights.weeks[w].date()}, {weights.tickers[n]})")

    previous = np.vstack([np.zeros((1, len(weights.tickers))), weights.values[:-1]])
    turnover = np.abs(weights.values - previous).sum(axis=1)
    gross = np.where(held, weights.values * np.nan_to_num(r), 0.0).sum(axis=1) + (1.0 - weights.exposure) * rf
    cost = cost_rate * turnover
    net = gross - cost
    return PortfolioTrack(
        construction=weights.construction,
        model_id=model_id,
        weeks=weights.weeks,
        gross=gross,
        cost=cost,
        net=net,
        turnover=turnover,
        exposure=weights.exposure.copy(),
        risk_free=rf,
    )


def max_drawdown(net: np.ndarray) -> float:
    """Worst wealth / running peak - 1, with initial wealth 1 counted as a peak."""
    wealth = np.cumprod(1.0 + np.asarray(net, dtype=float))
    peaks = np.maximum.accumulate(np.concatenate([[1.0], wealth]))[1:]
    return float(min(0.0, (wealth / peaks - 1.0).min())) if len(wealth) else 0.0


def report(track: PortfolioTrack, weeks_per_year: int = WEEKS_PER_YEAR) -> PortfolioReport:
    net = np.asarray(track.net, dtype=float)
    t = len(net)
    if t < MIN_REPORT_WEEKS:
        raise PortfolioError(f"performance report needs at least {MIN_REPORT_WEEKS} weeks, got {t}")

    growth = float(np.prod(1.0 + net))
    ann_return = growth ** (weeks_per_year / t) - 1.0 if growth > 0 else -1.0
    ann_vol = float(net.std(ddof=1)) * math.sqrt(weeks_per_year)

    excess = net - track.risk_free
    if np.all(excess == 0.0):
        sharpe = 0.0
    else:
        sd = float(excess.std(ddof=1))
        if not sd > 0:
            raise PortfolioError(f"degenerate returns for {track.model_id}/{track.construction}")
        sharpe = float(excess.mean()) / sd * math.sqrt(weeks_per_year)

    return PortfolioReport(
        model_id=track.model_id,
        construction=track.construction,
        ann_return=ann_return,
        ann_vol=ann_vol,
        sharpe=sharpe,
        max_drawdown=max_drawdown(net),
        avg_turnover=float(track.turnover[1:].mean()) if t > 1 else 0.0,
    )
