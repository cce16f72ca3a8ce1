import numpy as np
import pandas as pd
import pytest

from errors import DataError
from ingest_rates import constant_risk_free, load_market_inputs, load_risk_free


def _write(path, text):
    path.write_text(text.strip() + "\n", encoding="utf-8")
    return path


def test_risk_free_keyed_to_monday(tmp_path):
    path = _write(tmp_path / "rf.csv", "week,rate_weekly\n2024-01-03,0.0004\n2024-01-08,0.0005\n")
    rf = load_risk_free(path)
    assert list(rf.index) == [pd.Timestamp("2024-01-01"), pd.Timestamp("2024-01-08")]
    assert rf.iloc[0] == pytest.approx(0.0004)


def test_risk_free_duplicate_week(tmp_path):
    path = _write(tmp_path / "rf.csv", "week,rate_weekly\n2024-01-02,0.0004\n2024-01-05,0.0005\n")
    with pytest.raises(DataError, match="duplicate week 2024-01-01 at row 3"):
        load_risk_free(path)


def test_risk_free_missing_column(tmp_path):
    path = _write(tmp_path / "rf.csv", "week,rate\n2024-01-02,0.0004\n")
    with pytest.raises(DataError, match="missing columns"):
        load_risk_free(path)


def test_constant_rate_compounds_weekly():
    weeks = pd.date_range("2024-01-01", periods=52, freq="W-MON")
    rf = constant_risk_free(weeks, 0.02)
    assert np.prod(1.0 + rf.to_numpy()) == pytest.approx(1.02)


def test_market_inputs_keep_blanks_missing(tmp_path):
    path = _write(tmp_path / "mkt.csv", "week,fear_level,credit_spread\n2024-01-02,18.5,\n2024-01-09,20,1.3\n")
    frame = load_market_inputs(path)
    assert list(frame.columns) == ["fear_level", "credit_spread"]
    assert np.isnan(frame.loc["2024-01-01", "credit_spread"])
    assert frame.loc["2024-01-08", "fear_level"] == 20.0


def test_market_inputs_need_a_known_column(tmp_path):
    path = _write(tmp_path / "mkt.csv", "week,vix\n2024-01-02,18\n")
    with pytest.raises(DataError, match="expected at least one of"):
        load_market_inputs(path)
