"""
HAR baselines: next-week realized volatility regressed on trailing 5-, 21-
and 63-day average volatility, fitted per stock or pooled over the universe.

Inputs are raw (unnormalized) volatility levels; the model is a pure
autoregression on the volatility series.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from errors import ModelError
from features import LONGEST_WINDOW
from models import ANNUALIZATION_DAYS, FeatureTensor, ForecastMatrix, HarModel
from realized_vol import min_count_for, nan_mean, trailing_realized_vol, trailing_reduce

logger = logging.getLogger(__name__)

HAR_WINDOWS = (5, 21, 63)
MIN_OBSERVATIONS = 8
PROXIES = ("window_stdev", "abs_return")


def trailing_means(daily_rv: np.ndarray, end_positions: np.ndarray, coverage_tolerance: float = 0.8) -> np.ndarray:
    """
    Means of a daily volatility series over the 5/21/63 days ending at each
    end position: (weeks x stocks x 3). Ends before day 63 are NaN.
    """
    daily_rv = np.asarray(daily_rv, dtype=float)
    out = np.stack(
        [
            trailing_reduce(daily_rv, end_positions, window, nan_mean, min_count_for(window, coverage_tolerance))
            for window in HAR_WINDOWS
        ],
        axis=-1,
    )
    out[np.asarray(end_positions) < LONGEST_WINDOW] = np.nan
    return out


def har_features(
    returns: np.ndarray,
    end_positions: np.ndarray,
    proxy: str = "window_stdev",
    coverage_tolerance: float = 0.8,
    annualization_days: int = ANNUALIZATION_DAYS,
) -> np.ndarray:
    """
    (weeks x stocks x 3) HAR regressors from daily log returns (days x stocks).

    window_stdev: annualized sample stdev over each trailing window.
    abs_return: trailing means of the annualized absolute daily return.
    """
    returns = np.asarray(returns, dtype=float)
    if proxy == "window_stdev":
        out = np.stack(
            [
                trailing_realized_vol(
                    returns, end_positions, window, min_count_for(window, coverage_tolerance), annualization_days
                )
                for window in HAR_WINDOWS
            ],
            axis=-1,
        )
        out[np.asarray(end_positions) < LONGEST_WINDOW] = np.nan
        return out
    if proxy == "abs_return":
        return trailing_means(np.abs(returns) * math.sqrt(annualization_days), end_positions, coverage_tolerance)
    raise ModelError(f"unknown HAR volatility proxy '{proxy}' (expected one of {PROXIES})")


def _design(features: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(features)), features])


def ols(features: np.ndarray, target: np.ndarray, label: str) -> np.ndarray:
    """(intercept, b5, b21, b63) by least squares; raises on too few rows or a singular design."""
    if len(target) < MIN_OBSERVATIONS:
        raise ModelError(f"HAR fit for {label} has {len(target)} observations, needs {MIN_OBSERVATIONS}")
    x = _design(features)
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise ModelError(f"singular HAR design for {label}")
    beta, *_ = np.linalg.lstsq(x, target, rcond=None)
    return beta


def fit_har(
    features: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
    tickers: Sequence[str],
    mode: str = "per_stock",
) -> HarModel:
    """
    Fit on the (week, stock) rows where mask holds and all three regressors
    are finite. Per-stock fits that fail are logged and left out, which masks
    that stock's predictions; a failing pooled fit raises.
    """
    usable = mask & np.isfinite(features).all(axis=2) & np.isfinite(target)
    coefficients: Dict[str, np.ndarray] = {}
    if mode == "pooled":
        coefficients["pooled"] = ols(features[usable], target[usable], "pooled universe")
    elif mode == "per_stock":
        skipped: List[str] = []
        for n, ticker in enumerate(tickers):
            rows = usable[:, n]
            try:
                coefficients[ticker] = ols(features[rows, n], target[rows, n], ticker)
            except ModelError as exc:
                skipped.append(ticker)
                logger.debug("HAR %s masked: %s", ticker, exc)
        if skipped:
            logger.warning("HAR per-stock fit masked %d of %d stocks: %s", len(skipped), len(tickers), skipped[:10])
        if not coefficients:
            raise ModelError("HAR per-stock fit failed for every stock")
    else:
        raise ModelError(f"unknown HAR mode '{mode}'")
    return HarModel(mode=mode, tickers=list(tickers), coefficients=coefficients)


def predict_har(
    model: HarModel,
    features: np.ndarray,
    weeks: pd.DatetimeIndex,
    target_weeks: pd.DatetimeIndex,
    tickers: Sequence[str],
    mask: Optional[np.ndarray] = None,
    model_id: Optional[str] = None,
) -> ForecastMatrix:
    """Linear predictions clamped at 0; stocks without coefficients are masked."""
    valid = np.isfinite(features).all(axis=2)
    if mask is not None:
        valid &= mask
    values = np.zeros(valid.shape)
    for n, ticker in enumerate(tickers):
        beta = model.coefficients.get("pooled" if model.mode == "pooled" else ticker)
        if beta is None:
            valid[:, n] = False
            continue
        rows = valid[:, n]
        values[rows, n] = _design(features[rows, n]) @ beta
    return ForecastMatrix(
        model_id=model_id or f"har_{model.mode}",
        weeks=pd.DatetimeIndex(weeks),
        target_weeks=pd.DatetimeIndex(target_weeks),
        tickers=list(tickers),
        values=np.maximum(values, 0.0),
        mask=valid,
    )


def fit_predict_har(tensor: FeatureTensor, features: np.ndarray, mode: str) -> tuple[HarModel, ForecastMatrix]:
    """Fit on the training weeks of the tensor and predict every week."""
    if features.shape[:2] != tensor.mask.shape:
        raise ModelError(f"HAR features {features.shape[:2]} do not match the tensor grid {tensor.mask.shape}")
    train = tensor.split.mask(tensor.weeks, "train")[:, None] & tensor.mask
    model = fit_har(features, tensor.target, train, tensor.tickers, mode)
    forecast = predict_har(
        model, features, tensor.weeks, tensor.target_weeks, tensor.tickers, mask=tensor.mask,
        model_id=f"har_{mode}",
    )
    return model, forecast
