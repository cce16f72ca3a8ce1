"""
Point-accuracy and cross-sectional ranking metrics.

Forecast row w (made at the end of weeks[w]) is scored against realized
volatility in target_weeks[w]. Evaluation ranges select forecast origin
weeks, the same weeks the feature split assigns to train/validation/test.
"""

from __future__ import annotations

import logging
import math
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from errors import EvaluationError
from models import AccuracyReport, ForecastMatrix, RankReport, SplitSpec, WeeklyVolPanel

logger = logging.getLogger(__name__)

WeekRange = Tuple[pd.Timestamp, pd.Timestamp]
MIN_IC_STOCKS = 3


def aligned_actuals(
    forecast: ForecastMatrix, actual: WeeklyVolPanel, week_range: Optional[WeekRange] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    (row positions, pred, actual, previous actual, mask) restricted to the range.

    previous actual is the realized vol of the origin week; mask keeps stock-
    weeks with an unmasked prediction and a realized target.
    """
    missing = [t for t in forecast.tickers if t not in actual.rv.columns]
    if missing:
        raise EvaluationError(f"actual volatility missing tickers {missing[:5]}")
    rv = actual.rv[forecast.tickers]
    target = rv.reindex(forecast.target_weeks).to_numpy(dtype=float)
    previous = rv.reindex(forecast.weeks).to_numpy(dtype=float)

    rows = np.ones(len(forecast.weeks), dtype=bool)
    if week_range is not None:
        start, end = week_range
        rows = np.asarray((forecast.weeks >= start) & (forecast.weeks <= end))
    positions = np.flatnonzero(rows)
    mask = forecast.mask[positions] & np.isfinite(target[positions])
    return positions, forecast.values[positions], target[positions], previous[positions], mask


def accuracy(
    forecast: ForecastMatrix, actual: WeeklyVolPanel, week_range: Optional[WeekRange] = None
) -> AccuracyReport:
    """Pooled MSE, MAE, R2 (about the pooled actual mean) and directional accuracy."""
    _, pred, act, prev, mask = aligned_actuals(forecast, actual, week_range)
    if not mask.any():
        raise EvaluationError(f"no overlapping stock-weeks to score for '{forecast.model_id}'")
    p, a = pred[mask], act[mask]
    err = p - a
    rss = float(err @ err)
    tss = float(((a - a.mean()) ** 2).sum())
    if tss > 0:
        r2 = 1.0 - rss / tss
    else:
        logger.warning("%s: realized volatility constant over the range; R2 undefined", forecast.model_id)
        r2 = float("nan")

    has_prev = mask & np.isfinite(prev)
    if has_prev.any():
        base = prev[has_prev]
        da = float(np.mean(np.sign(pred[has_prev] - base) == np.sign(act[has_prev] - base)))
    else:
        da = float("nan")

    return AccuracyReport(
        model_id=forecast.model_id,
        mse=rss / len(err),
        mae=float(np.abs(err).mean()),
        r2=r2,
        directional_accuracy=da,
        n_obs=int(mask.sum()),
    )


def spearman_ic(pred: np.ndarray, actual: np.ndarray) -> float:
    """
    Pearson correlation of average ranks. NaN (undefined) with fewer than
    three stocks or when either side has no rank variation.
    """
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if len(pred) != len(actual):
        raise EvaluationError("prediction and actual vectors differ in length")
    if len(pred) < MIN_IC_STOCKS:
        return float("nan")
    rp = rankdata(pred, method="average")
    ra = rankdata(actual, method="average")
    if np.ptp(rp) == 0 or np.ptp(ra) == 0:
        return float("nan")
    dp, da = rp - rp.mean(), ra - ra.mean()
    ic = float((dp @ da) / math.sqrt((dp @ dp) * (da @ da)))
    return min(1.0, max(-1.0, ic))


def quintile_size(n: int) -> int:
    return int(math.ceil(n / 5))


def top_quintile_hit_rate(pred: np.ndarray, actual: np.ndarray) -> float:
    """Share of the ceil(n/5) highest-predicted stocks that are also among the ceil(n/5) highest actual."""
    n = len(pred)
    if n == 0:
        return float("nan")
    k = quintile_size(n)
    top_pred = set(np.argsort(-np.asarray(pred, dtype=float), kind="stable")[:k].tolist())
    top_act = set(np.argsort(-np.asarray(actual, dtype=float), kind="stable")[:k].tolist())
    return len(top_pred & top_act) / k


def pairwise_accuracy(pred: np.ndarray, actual: np.ndarray) -> float:
    """Concordant share of stock pairs, pairs tied in either series excluded. NaN with no untied pair."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    i, j = np.triu_indices(len(pred), k=1)
    sp = np.sign(pred[i] - pred[j])
    sa = np.sign(actual[i] - actual[j])
    untied = (sp != 0) & (sa != 0)
    if not untied.any():
        return float("nan")
    return float(np.mean(sp[untied] == sa[untied]))


def summarize_ic(weekly_ic: Sequence[float]) -> Tuple[float, float]:
    """Mean IC and ICIR (mean / sample stdev) over defined weeks."""
    ics = np.asarray([x for x in weekly_ic if np.isfinite(x)], dtype=float)
    if len(ics) < 2:
        raise EvaluationError(f"need at least two weeks with a defined IC, got {len(ics)}")
    std = ics.std(ddof=1)
    if not std > 0:
        raise EvaluationError("degenerate IC series")
    return float(ics.mean()), float(ics.mean() / std)


def rank_report(
    forecast: ForecastMatrix, actual: WeeklyVolPanel, week_range: Optional[WeekRange] = None
) -> RankReport:
    positions, pred, act, _, mask = aligned_actuals(forecast, actual, week_range)
    ics: List[float] = []
    hits: List[float] = []
    pairs: List[float] = []
    for k in range(len(positions)):
        keep = mask[k]
        if not keep.any():
            ics.append(float("nan"))
            continue
        p, a = pred[k][keep], act[k][keep]
        ics.append(spearman_ic(p, a))
        hits.append(top_quintile_hit_rate(p, a))
        pairs.append(pairwise_accuracy(p, a))

    weekly = pd.Series(ics, index=forecast.weeks[positions], name=forecast.model_id, dtype=float)
    undefined = int(weekly.isna().sum())
    if undefined:
        logger.warning("%s: IC undefined in %d of %d weeks (excluded)", forecast.model_id, undefined, len(weekly))
    mean_ic, icir = summarize_ic(weekly.to_numpy())
    return RankReport(
        model_id=forecast.model_id,
        mean_ic=mean_ic,
        icir=icir,
        top_quintile_hit_rate=float(np.nanmean(hits)) if hits else float("nan"),
        pairwise_accuracy=float(np.nanmean(pairs)) if np.isfinite(pairs).any() else float("nan"),
        weekly_ic=weekly,
        undefined_weeks=undefined,
    )


def prediction_dispersion(forecast: ForecastMatrix) -> pd.Series:
    """Cross-sectional sample stdev of predictions per origin week (NaN below two stocks)."""
    out = np.full(len(forecast.weeks), np.nan)
    for w in range(len(forecast.weeks)):
        vals = forecast.values[w][forecast.mask[w]]
        if len(vals) >= 2:
            out[w] = vals.std(ddof=1)
    return pd.Series(out, index=forecast.weeks, name=forecast.model_id)


def dispersion_table(
    forecasts: Mapping[str, ForecastMatrix],
    density: pd.Series,
    week_range: Optional[WeekRange] = None,
) -> pd.DataFrame:
    """Long table (week, model, dispersion, density) for the oversmoothing monitor."""
    frames = []
    for model_id in sorted(forecasts):
        disp = prediction_dispersion(forecasts[model_id])
        if week_range is not None:
            disp = disp[(disp.index >= week_range[0]) & (disp.index <= week_range[1])]
        frames.append(
            pd.DataFrame(
                {
                    "week": disp.index.strftime("%Y-%m-%d"),
                    "model": model_id,
                    "dispersion": disp.to_numpy(),
                    "density": density.reindex(disp.index).to_numpy(),
                }
            )
        )
    if not frames:
        return pd.DataFrame(columns=["week", "model", "dispersion", "density"])
    return pd.concat(frames, ignore_index=True)


def validation_mse(forecast: ForecastMatrix, actual: WeeklyVolPanel, split: SplitSpec) -> float:
    return accuracy(forecast, actual, split.validation).mse


def weekly_ic_frame(reports: Mapping[str, RankReport]) -> pd.DataFrame:
    return pd.DataFrame({mid: r.weekly_ic for mid, r in sorted(reports.items())})