from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from errors import FeatureError
from models import (
    ANNUALIZATION_DAYS,
    MACRO_CHANNELS,
    STOCK_CHANNELS,
    FeatureTensor,
    MacroSeries,
    SplitSpec,
    StockFeatureCube,
    UniversePanel,
    WeeklyVolPanel,
)
from realized_vol import min_count_for, nan_mean, nan_sum, trailing_realized_vol, trailing_reduce
from timeline import calendar_weeks, week_close_positions

logger = logging.getLogger(__name__)

LONGEST_WINDOW = 63


def stock_features(
    panel: UniversePanel,
    returns: pd.DataFrame,
    weeks: Optional[pd.DatetimeIndex] = None,
    coverage_tolerance: float = 0.8,
    annualization_days: int = ANNUALIZATION_DAYS,
) -> StockFeatureCube:
    """
    The ten raw stock channels (STOCK_CHANNELS order) at each week close.

    Windows are trailing trading days ending at the last trading day of the
    week. A window with fewer than coverage_tolerance * window observations,
    or a week closing before day 63, is invalid (NaN).
    """
    if weeks is None:
        weeks = calendar_weeks(panel.calendar)
    end = week_close_positions(panel.calendar, weeks)
    r = returns[panel.tickers].to_numpy(dtype=float)
    vol = panel.volume.to_numpy(dtype=float)

    def rv(window: int) -> np.ndarray:
        return trailing_realized_vol(r, end, window, min_count_for(window, coverage_tolerance), annualization_days)

    def trailing(values: np.ndarray, window: int, reducer) -> np.ndarray:
        return trailing_reduce(values, end, window, reducer, min_count_for(window, coverage_tolerance))

    rv5, rv10, rv21, rv63 = rv(5), rv(10), rv(21), rv(63)
    mv5, mv20 = trailing(vol, 5, nan_mean), trailing(vol, 20, nan_mean)

    with np.errstate(divide="ignore", invalid="ignore"):
        # zero long-run vol only happens on flat prices, where the short window is flat too
        rv_ratio = np.where(rv63 > 0, rv5 / rv63, np.where(rv63 == 0, 1.0, np.nan))
        vol_ratio = np.where(mv20 > 0, mv5 / mv20, np.nan)

    channels = {
        "rv5": rv5,
        "rv10": rv10,
        "rv21": rv21,
        "rv63": rv63,
        "rv_ratio": rv_ratio,
        "mom5": trailing(r, 5, nan_sum),
        "mom20": trailing(r, 20, nan_sum),
        "logvol5": np.log1p(mv5),
        "logvol20": np.log1p(mv20),
        "vol_ratio": vol_ratio,
    }
    values = np.stack([channels[c] for c in STOCK_CHANNELS], axis=-1)
    values[end < LONGEST_WINDOW] = np.nan
    return StockFeatureCube(weeks=pd.DatetimeIndex(weeks), tickers=list(panel.tickers), values=values)


def winsorize_cross_section(
    values: np.ndarray,
    lower_pct: float = 0.01,
    upper_pct: float = 0.99,
) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """
    Clamp each week's channel to its [lower_pct, upper_pct] empirical
    quantiles (linear interpolation between order statistics).

    Channel-weeks with fewer than two valid stocks are left untouched and
    returned in the flagged list as (week_idx, channel_idx).
    """
    out = np.array(values, dtype=float, copy=True)
    flagged: List[Tuple[int, int]] = []
    n_weeks, _, n_channels = out.shape
    for w in range(n_weeks):
        for c in range(n_channels):
            col = out[w, :, c]
            ok = np.isfinite(col)
            if ok.sum() < 2:
                flagged.append((w, c))
                continue
            lo, hi = np.quantile(col[ok], [lower_pct, upper_pct])
            col[ok] = np.clip(col[ok], lo, hi)
    return out, flagged


def zscore_cross_section(values: np.ndarray) -> np.ndarray:
    """Per week and channel: (x - mean) / sample stdev over valid stocks; flat channel-weeks become 0."""
    out = np.array(values, dtype=float, copy=True)
    n_weeks, _, n_channels = out.shape
    for w in range(n_weeks):
        for c in range(n_channels):
            col = out[w, :, c]
            ok = np.isfinite(col)
            if not ok.any():
                continue
            v = col[ok]
            if len(v) < 2 or np.ptp(v) == 0:
                col[ok] = 0.0
                continue
            std = v.std(ddof=1)
            col[ok] = 0.0 if std == 0 else (v - v.mean()) / std
    return out


def normalize_stock_features(
    cube: StockFeatureCube,
    lower_pct: float = 0.01,
    upper_pct: float = 0.99,
) -> StockFeatureCube:
    """Winsorize then z-score cross-sectionally, week by week."""
    clipped, flagged = winsorize_cross_section(cube.values, lower_pct, upper_pct)
    if flagged:
        logger.warning("Winsorization skipped %d channel-weeks with < 2 valid stocks", len(flagged))
    return cube.replace_values(zscore_cross_section(clipped))


def assemble_tensor(
    stock: StockFeatureCube,
    macro: MacroSeries,
    weekly_rv: WeeklyVolPanel,
    split: SplitSpec,
) -> FeatureTensor:
    """
    Pair features at week w with realized volatility at the next week.

    Inputs may arrive in any week order; they are sorted first. The last week
    has no target and is dropped.
    """
    s_order = np.argsort(stock.weeks.asi8, kind="stable")
    m_order = np.argsort(macro.weeks.asi8, kind="stable")
    weeks = stock.weeks[s_order]
    macro_weeks = macro.weeks[m_order]
    rv = weekly_rv.rv.sort_index()

    if not (weeks.equals(macro_weeks) and weeks.equals(pd.DatetimeIndex(rv.index))):
        raise FeatureError(
            f"week-grid mismatch: stock {len(weeks)} weeks, macro {len(macro_weeks)}, rv {len(rv.index)}"
        )
    missing = [t for t in stock.tickers if t not in rv.columns]
    if missing:
        raise FeatureError(f"weekly rv missing tickers {missing[:5]}")
    if len(weeks) < 2:
        raise FeatureError("need at least two weeks to pair features with a next-week target")

    x = stock.values[s_order][:-1]
    m = macro.values[m_order][:-1]
    bad_macro = ~np.isfinite(m).all(axis=1)
    if bad_macro.any():
        listed = [str(w.date()) for w in weeks[:-1][bad_macro][:10]]
        raise FeatureError(f"macro features missing for weeks {listed}")

    y = rv[stock.tickers].to_numpy(dtype=float)[1:]
    feature_mask = np.isfinite(x).all(axis=2)
    mask = feature_mask & np.isfinite(y)

    return FeatureTensor(
        weeks=weeks[:-1],
        target_weeks=weeks[1:],
        tickers=list(stock.tickers),
        stock_features=np.where(feature_mask[:, :, None], np.nan_to_num(x), 0.0),
        macro_features=m,
        target=np.where(mask, np.nan_to_num(y), 0.0),
        mask=mask,
        feature_mask=feature_mask,
        split=split,
    )


def save_tensor(tensor: FeatureTensor, path: str | Path) -> None:
    """npz dump; the JSON header records channel order, tickers, weeks and split."""
    header = {
        "stock_channels": list(STOCK_CHANNELS),
        "macro_channels": list(MACRO_CHANNELS),
        "tickers": tensor.tickers,
        "weeks": [w.strftime("%Y-%m-%d") for w in tensor.weeks],
        "target_weeks": [w.strftime("%Y-%m-%d") for w in tensor.target_weeks],
        "split": {
            name: [d.strftime("%Y-%m-%d") for d in getattr(tensor.split, name)]
            for name in ("train", "validation", "test")
        },
    }
    np.savez(
        path,
        header=np.array(json.dumps(header, sort_keys=True)),
        stock_features=tensor.stock_features,
        macro_features=tensor.macro_features,
        target=tensor.target,
        mask=tensor.mask,
        feature_mask=tensor.feature_mask,
    )


def load_tensor(path: str | Path) -> FeatureTensor:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if tuple(header["stock_channels"]) != STOCK_CHANNELS or tuple(header["macro_channels"]) != MACRO_CHANNELS:
            raise FeatureError(f"tensor dump {path} has a different channel order")
        split = SplitSpec(**{k: tuple(pd.Timestamp(d) for d in v) for k, v in header["split"].items()})
        return FeatureTensor(
            weeks=pd.DatetimeIndex(header["weeks"]),
            target_weeks=pd.DatetimeIndex(header["target_weeks"]),
            tickers=header["tickers"],
            stock_features=data["stock_features"],
            macro_features=data["macro_features"],
            target=data["target"],
            mask=data["mask"],
            feature_mask=data["feature_mask"],
            split=split,
        )
