"""
Forecast-driven portfolio constructions.

Every construction turns one week's predicted volatilities (over the stocks
with a valid forecast) into target weights for the following week.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from errors import PortfolioError
from models import ForecastMatrix, WeightMatrix

logger = logging.getLogger(__name__)

PRED_FLOOR = 0.01
CONSTRUCTIONS = ("inverse_vol", "long_short", "min_variance", "vol_target")


def _floored(pred: np.ndarray, floor: float = PRED_FLOOR) -> np.ndarray:
    return np.maximum(np.asarray(pred, dtype=float), floor)


def weights_equal(n: int) -> np.ndarray:
    if n < 1:
        raise PortfolioError("equal weight needs at least one valid stock")
    return np.full(n, 1.0 / n)


def weights_inverse_vol(pred: np.ndarray, floor: float = PRED_FLOOR) -> Tuple[np.ndarray, bool]:
    """w ~ 1 / sigma, predictions floored first. Flagged when every prediction sits at the floor."""
    pred = np.asarray(pred, dtype=float)
    if len(pred) == 0:
        raise PortfolioError("inverse-vol weights need at least one valid stock")
    if np.all(pred <= floor):
        return weights_equal(len(pred)), True
    inv = 1.0 / _floored(pred, floor)
    return inv / inv.sum(), False


def weights_long_short(pred: np.ndarray) -> np.ndarray:
    """
    +1 spread over the ceil(n/5) lowest predicted vols, -1 over the ceil(n/5)
    highest. Ties resolve in ticker order, so the legs never overlap.
    """
    pred = np.asarray(pred, dtype=float)
    n = len(pred)
    if n < 5:
        raise PortfolioError(f"long-short needs at least 5 stocks, got {n}")
    k = int(math.ceil(n / 5))
    order = np.argsort(pred, kind="stable")
    w = np.zeros(n)
    w[order[:k]] = 1.0 / k
    w[order[n - k :]] = -1.0 / k
    return w


def weights_min_variance(pred: np.ndarray, cap: float = 0.05, floor: float = PRED_FLOOR) -> np.ndarray:
    """
    Long-only minimum variance under a diagonal covariance diag(sigma^2)
    with 0 <= w <= cap, sum w = 1.

    Iterative capping: weights ~ 1/sigma^2; any weight above the cap is fixed
    there and the remaining budget re-spread proportionally over the rest.
    """
    pred = np.asarray(pred, dtype=float)
    n = len(pred)
    if n == 0 or cap * n < 1.0 - 1e-12:
        raise PortfolioError(f"infeasible cap: {n} stocks x cap {cap} < 1")
    inv = 1.0 / _floored(pred, floor) ** 2
    w = np.zeros(n)
    free = np.ones(n, dtype=bool)
    budget = 1.0
    for _ in range(n + 1):
        if not free.any():
            break
        w[free] = budget * inv[free] / inv[free].sum()
        over = free & (w > cap)
        if not over.any():
            break
        w[over] = cap
        free &= ~over
        budget = 1.0 - cap * int((~free).sum())
    return w


def vol_target_exposure(
    pred: np.ndarray,
    base_weights: np.ndarray,
    target: float = 0.10,
    leverage_cap: float = 2.0,
) -> Tuple[np.ndarray, float, bool]:
    """
    Scale base weights so the predicted portfolio vol sqrt(sum w^2 sigma^2)
    hits the target, up to the leverage cap. Returns (scaled weights,
    exposure, flagged); a zero predicted vol takes the cap and is flagged.
    """
    pred = np.asarray(pred, dtype=float)
    base = np.asarray(base_weights, dtype=float)
    if pred.shape != base.shape:
        raise PortfolioError(f"predictions {pred.shape} and base weights {base.shape} differ")
    sigma_p = math.sqrt(float(np.sum(base**2 * pred**2)))
    if sigma_p == 0.0:
        return leverage_cap * base, leverage_cap, True
    exposure = min(target / sigma_p, leverage_cap)
    return exposure * base, exposure, False


def _week_rows(forecast: ForecastMatrix, week_range: Optional[Tuple[pd.Timestamp, pd.Timestamp]]) -> np.ndarray:
    if week_range is None:
        return np.arange(len(forecast.weeks))
    start, end = week_range
    return np.flatnonzero((forecast.weeks >= start) & (forecast.weeks <= end))


def build_weights(
    construction: str,
    forecast: ForecastMatrix,
    week_range: Optional[Tuple[pd.Timestamp, pd.Timestamp]] = None,
    cap: float = 0.05,
    vol_target: float = 0.10,
    leverage_cap: float = 2.0,
    vol_target_base: str = "equal",
) -> WeightMatrix:
    """
    Target weights per holding week (the forecast's target week) for one
    construction over the stocks with an unmasked forecast.

    "equal" ignores the predictions and spreads 1/n over the same stocks.
    """
    rows = _week_rows(forecast, week_range)
    n = len(forecast.tickers)
    values = np.zeros((len(rows), n))
    exposure = np.ones(len(rows))
    flagged: List[str] = []

    for k, w in enumerate(rows):
        valid = forecast.mask[w]
        pred = forecast.values[w][valid]
        label = forecast.target_weeks[w].strftime("%Y-%m-%d")
        if not valid.any():
            raise PortfolioError(f"no valid forecasts for holding week {label}")
        if construction == "equal":
            weights = weights_equal(int(valid.sum()))
        elif construction == "inverse_vol":
            weights, flat = weights_inverse_vol(pred)
            if flat:
                flagged.append(label)
        elif construction == "long_short":
            weights = weights_long_short(pred)
        elif construction == "min_variance":
            weights = weights_min_variance(pred, cap)
        elif construction == "vol_target":
            if vol_target_base == "equal":
                base = weights_equal(int(valid.sum()))
            elif vol_target_base == "inverse_vol":
                base, _ = weights_inverse_vol(pred)
            else:
                raise PortfolioError(f"unknown vol-target base '{vol_target_base}'")
            weights, exposure[k], capped = vol_target_exposure(pred, base, vol_target, leverage_cap)
            if capped:
                flagged.append(label)
        else:
            raise PortfolioError(f"unknown construction '{construction}'")
        values[k, valid] = weights

    if flagged:
        logger.warning(
            "%s/%s: %d weeks flagged (degenerate predictions): %s",
            forecast.model_id, construction, len(flagged), flagged[:5],
        )
    return WeightMatrix(
        construction=construction,
        weeks=forecast.target_weeks[rows],
        tickers=list(forecast.tickers),
        values=values,
        exposure=exposure,
        flagged=flagged,
    )


def build_all(
    forecast: ForecastMatrix,
    week_range: Optional[Tuple[pd.Timestamp, pd.Timestamp]] = None,
    **params,
) -> Dict[str, WeightMatrix]:
    return {c: build_weights(c, forecast, week_range, **params) for c in CONSTRUCTIONS}
