from __future__ import annotations

from datetime import timedelta
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from errors import FeatureError
from models import SplitSpec


def week_key(day: pd.Timestamp) -> pd.Timestamp:
    """ISO week key: the Monday of the week containing `day`."""
    day = pd.Timestamp(day).normalize()
    return day - timedelta(days=day.weekday())


def week_keys(calendar: pd.DatetimeIndex) -> pd.DatetimeIndex:
    """Week key for every trading day, aligned with the calendar."""
    cal = pd.DatetimeIndex(calendar).normalize()
    return cal - pd.to_timedelta(cal.weekday, unit="D")


def group_into_weeks(calendar: pd.DatetimeIndex) -> Dict[pd.Timestamp, List[int]]:
    """
    Group trading-day positions by ISO week, in calendar order.

    Weeks keep whatever trading days they have; holidays just make them shorter.
    """
    groups: Dict[pd.Timestamp, List[int]] = {}
    for pos, key in enumerate(week_keys(calendar)):
        groups.setdefault(key, []).append(pos)
    return groups


def week_close_positions(calendar: pd.DatetimeIndex, weeks: Optional[pd.DatetimeIndex] = None) -> np.ndarray:
    """
    Position (in the calendar) of the last trading day of each week.

    Trailing windows for week w end here, so nothing from week w+1 leaks in.
    """
    groups = group_into_weeks(calendar)
    if weeks is None:
        weeks = pd.DatetimeIndex(sorted(groups))
    missing = [w for w in weeks if w not in groups]
    if missing:
        raise FeatureError(f"weeks without trading days: {[str(w.date()) for w in missing[:5]]}")
    return np.array([groups[w][-1] for w in weeks], dtype=int)


def calendar_weeks(calendar: pd.DatetimeIndex) -> pd.DatetimeIndex:
    return pd.DatetimeIndex(sorted(group_into_weeks(calendar)))


def split_by_dates(
    weeks: pd.DatetimeIndex,
    train_end: pd.Timestamp,
    validation_end: pd.Timestamp,
) -> SplitSpec:
    """Train through train_end, validation through validation_end, test after."""
    weeks = pd.DatetimeIndex(sorted(weeks))
    train_end, validation_end = pd.Timestamp(train_end), pd.Timestamp(validation_end)
    train = weeks[weeks <= train_end]
    val = weeks[(weeks > train_end) & (weeks <= validation_end)]
    test = weeks[weeks > validation_end]
    if len(train) == 0 or len(val) == 0 or len(test) == 0:
        raise FeatureError(
            f"split leaves an empty range (train={len(train)}, validation={len(val)}, test={len(test)})"
        )
    return SplitSpec(
        train=(train[0], train[-1]),
        validation=(val[0], val[-1]),
        test=(test[0], test[-1]),
    )


def split_by_fraction(weeks: pd.DatetimeIndex, train_frac: float, validation_frac: float) -> SplitSpec:
    """Chronological split by share of weeks; the remainder is the test range."""
    weeks = pd.DatetimeIndex(sorted(weeks))
    n = len(weeks)
    n_train = int(round(n * train_frac))
    n_val = int(round(n * validation_frac))
    if n_train < 1 or n_val < 1 or n - n_train - n_val < 1:
        raise FeatureError(f"cannot split {n} weeks as {train_frac}/{validation_frac}/rest")
    return split_by_dates(weeks, weeks[n_train - 1], weeks[n_train + n_val - 1])


def days_through(calendar: pd.DatetimeIndex, last_week: pd.Timestamp) -> np.ndarray:
    """Boolean mask of trading days falling in weeks up to and including last_week."""
    return np.asarray(week_keys(calendar) <= pd.Timestamp(last_week))
