from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Dict, Optional

import pandas as pd

from errors import DataError
from ingest_prices import _parse_date, _parse_float
from models import WEEKS_PER_YEAR
from timeline import week_key

logger = logging.getLogger(__name__)

MARKET_INPUT_COLUMNS = ("fear_level", "term_spread", "credit_spread")


def load_risk_free(csv_path: str | Path) -> pd.Series:
    """
    Weekly risk-free rates as decimal fractions per week.

    Expected CSV columns:
        week,rate_weekly

    Any date inside a week is accepted and keyed to that week's Monday.
    """
    rates: Dict[pd.Timestamp, float] = {}
    with open(csv_path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = {"week", "rate_weekly"} - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"row 1: missing columns {sorted(missing)}")
        for row_no, row in enumerate(reader, start=2):
            week = week_key(pd.Timestamp(_parse_date(row.get("week") or "", row_no)))
            rate = _parse_float(row.get("rate_weekly"), row_no, "rate_weekly")
            if rate is None:
                raise DataError(f"row {row_no}: empty rate_weekly")
            if week in rates:
                raise DataError(f"duplicate week {week.date()} at row {row_no}")
            rates[week] = rate
    series = pd.Series(rates, dtype=float).sort_index()
    series.index.name = "week"
    logger.info("Loaded %d weekly risk-free rates from %s", len(series), csv_path)
    return series


def constant_risk_free(weeks: pd.DatetimeIndex, annual_rate: float) -> pd.Series:
    """Weekly rate equivalent to a constant annual rate, compounded weekly."""
    weekly = (1.0 + annual_rate) ** (1.0 / WEEKS_PER_YEAR) - 1.0
    return pd.Series(weekly, index=pd.DatetimeIndex(weeks, name="week"), dtype=float)


def load_market_inputs(csv_path: str | Path) -> pd.DataFrame:
    """
    Optional externally sourced market series replacing the panel proxies.

    Expected CSV columns:
        week[,fear_level][,term_spread][,credit_spread]

    Blank cells stay missing and fall back to the proxy for that week.
    """
    rows: Dict[pd.Timestamp, Dict[str, Optional[float]]] = {}
    with open(csv_path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        fields = set(reader.fieldnames or [])
        if "week" not in fields:
            raise DataError("row 1: missing column 'week'")
        columns = [c for c in MARKET_INPUT_COLUMNS if c in fields]
        if not columns:
            raise DataError(f"row 1: expected at least one of {list(MARKET_INPUT_COLUMNS)}")
        for row_no, row in enumerate(reader, start=2):
            week = week_key(pd.Timestamp(_parse_date(row.get("week") or "", row_no)))
            if week in rows:
                raise DataError(f"duplicate week {week.date()} at row {row_no}")
            rows[week] = {c: _parse_float(row.get(c), row_no, c) for c in columns}
    frame = pd.DataFrame.from_dict(rows, orient="index", dtype=float).sort_index()
    frame.index.name = "week"
    return frame
