import numpy as np
import pandas as pd
import pytest

from errors import FeatureError
from timeline import (
    days_through,
    group_into_weeks,
    split_by_dates,
    split_by_fraction,
    week_close_positions,
    week_key,
)


def test_week_key_is_monday():
    assert week_key(pd.Timestamp("2024-01-03")) == pd.Timestamp("2024-01-01")
    assert week_key(pd.Timestamp("2024-01-07 15:30")) == pd.Timestamp("2024-01-01")
    assert week_key(pd.Timestamp("2024-01-08")) == pd.Timestamp("2024-01-08")


def test_holiday_week_keeps_its_days():
    # Monday 2024-01-01 missing
    calendar = pd.DatetimeIndex(["2024-01-02", "2024-01-03", "2024-01-05", "2024-01-08"])
    groups = group_into_weeks(calendar)
    assert groups == {pd.Timestamp("2024-01-01"): [0, 1, 2], pd.Timestamp("2024-01-08"): [3]}
    np.testing.assert_array_equal(week_close_positions(calendar), [2, 3])


def test_week_close_positions_rejects_unknown_week():
    calendar = pd.bdate_range("2024-01-01", periods=5)
    with pytest.raises(FeatureError, match="weeks without trading days"):
        week_close_positions(calendar, pd.DatetimeIndex(["2024-01-08"]))


def test_split_by_fraction_is_chronological():
    weeks = pd.date_range("2024-01-01", periods=10, freq="W-MON")
    split = split_by_fraction(weeks, 0.6, 0.2)
    assert split.train == (weeks[0], weeks[5])
    assert split.validation == (weeks[6], weeks[7])
    assert split.test == (weeks[8], weeks[9])


def test_split_by_dates_rejects_empty_range():
    weeks = pd.date_range("2024-01-01", periods=4, freq="W-MON")
    with pytest.raises(FeatureError, match="empty range"):
        split_by_dates(weeks, weeks[1], weeks[3])


def test_days_through_includes_last_week():
    calendar = pd.bdate_range("2024-01-01", periods=10)
    mask = days_through(calendar, pd.Timestamp("2024-01-01"))
    assert mask.sum() == 5
    assert mask[:5].all()
