from __future__ import annotations

import csv
import logging
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from dateutil import parser as date_parser

from errors import DataError
from models import BAR_FIELDS, DailyBar, UniversePanel

logger = logging.getLogger(__name__)

DEFAULT_SECTOR = "Unclassified"


def _parse_date(value: str, row_no: int) -> date:
    try:
        return date_parser.isoparse(value.strip()).date()
    except (ValueError, OverflowError) as exc:
        raise DataError(f"row {row_no}: malformed date {value!r}") from exc


def _parse_float(value: Optional[str], row_no: int, column: str) -> Optional[float]:
    """Empty cells are missing data, not zero."""
    raw = (value or "").strip()
    if not raw:
        return None
    try:
        return float(raw)
    except ValueError as exc:
        raise DataError(f"row {row_no}: column '{column}' is not a number: {raw!r}") from exc


def _read_long(csv_path: Path) -> Tuple[List[DailyBar], Dict[Tuple[str, int], str]]:
    """
    Long format, one bar per row.

    Expected CSV columns:
        ticker,date,open,high,low,close,volume[,sector]
    """
    bars: List[DailyBar] = []
    sectors: Dict[Tuple[str, int], str] = {}
    seen = set()

    with open(csv_path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        required = {"ticker", "date", "close"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"row 1: missing columns {sorted(missing)}")

        for row_no, row in enumerate(reader, start=2):
            ticker = (row.get("ticker") or "").strip()
            if not ticker:
                raise DataError(f"row {row_no}: empty ticker")
            day = _parse_date(row.get("date") or "", row_no)

            key = (ticker, day)
            if key in seen:
                raise DataError(f"duplicate key ({ticker}, {day.isoformat()}) at row {row_no}")
            seen.add(key)

            values = {f: _parse_float(row.get(f), row_no, f) for f in BAR_FIELDS}
            try:
                bars.append(DailyBar(ticker=ticker, date=day, **values))
            except DataError as exc:
                raise DataError(f"row {row_no}: {exc}") from exc

            sector = (row.get("sector") or "").strip()
            if sector:
                sectors[(ticker, day.year)] = sector

    return bars, sectors


def _read_wide(csv_path: Path) -> List[DailyBar]:
    """
    Wide format, one trading day per row.

    Columns: date, then `TICKER` (close) or `TICKER:field` for other fields.
    """
    bars: List[DailyBar] = []

    with open(csv_path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0].strip().lower() != "date":
            raise DataError("row 1: wide format must start with a 'date' column")

        columns: List[Tuple[str, str]] = []
        for name in header[1:]:
            ticker, _, fld = name.strip().partition(":")
            fld = fld or "close"
            if fld not in BAR_FIELDS:
                raise DataError(f"row 1: unknown field '{fld}' in column {name!r}")
            if (ticker, fld) in columns:
                raise DataError(f"row 1: duplicate column {name!r}")
            columns.append((ticker, fld))
        tickers = list(dict.fromkeys(t for t, _ in columns))

        seen_days = set()
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            day = _parse_date(row[0], row_no)
            if day in seen_days:
                raise DataError(f"duplicate key (date {day.isoformat()}) at row {row_no}")
            seen_days.add(day)

            per_ticker: Dict[str, Dict[str, Optional[float]]] = {t: {} for t in tickers}
            for (ticker, fld), cell in zip(columns, row[1:]):
                per_ticker[ticker][fld] = _parse_float(cell, row_no, f"{ticker}:{fld}")

            for ticker in tickers:
                values = {f: per_ticker[ticker].get(f) for f in BAR_FIELDS}
                if all(v is None for v in values.values()):
                    continue
                try:
                    bars.append(DailyBar(ticker=ticker, date=day, **values))
                except DataError as exc:
                    raise DataError(f"row {row_no}: {exc}") from exc

    return bars


def _read_sector_file(csv_path: Path) -> Dict[Tuple[str, Optional[int]], str]:
    """
    Sector labels.

    Expected CSV columns:
        ticker,sector[,year]   (no year = label applies to every year)
    """
    labels: Dict[Tuple[str, Optional[int]], str] = {}
    with open(csv_path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        for row_no, row in enumerate(reader, start=2):
            ticker = (row.get("ticker") or "").strip()
            sector = (row.get("sector") or "").strip()
            if not ticker or not sector:
                raise DataError(f"sector file row {row_no}: ticker and sector are required")
            year_raw = (row.get("year") or "").strip()
            year = int(year_raw) if year_raw else None
            labels[(ticker, year)] = sector
    return labels


def _resolve_sectors(
    tickers: List[str],
    years: List[int],
    labels: Dict[Tuple[str, Optional[int]], str],
) -> Dict[int, Dict[str, str]]:
    """
    Fill a complete year -> ticker -> sector map.

    A year without its own label inherits the closest earlier year's label,
    then the closest later one, then the undated label, then DEFAULT_SECTOR.
    """
    sector_map: Dict[int, Dict[str, str]] = {y: {} for y in years}
    for ticker in tickers:
        dated = sorted((y, s) for (t, y), s in labels.items() if t == ticker and y is not None)
        fallback = labels.get((ticker, None), DEFAULT_SECTOR)
        for year in years:
            earlier = [s for y, s in dated if y <= year]
            later = [s for y, s in dated if y > year]
            if earlier:
                sector_map[year][ticker] = earlier[-1]
            elif later and (ticker, None) not in labels:
                sector_map[year][ticker] = later[0]
            else:
                sector_map[year][ticker] = fallback
    return sector_map


def bars_to_panel(bars: List[DailyBar], sector_labels: Dict[Tuple[str, Optional[int]], str]) -> UniversePanel:
    """Align bars onto the union calendar; tickers keep first-appearance order."""
    if not bars:
        raise DataError("no bars to build a panel from")

    tickers = list(dict.fromkeys(b.ticker for b in bars))
    calendar = pd.DatetimeIndex(sorted({pd.Timestamp(b.date) for b in bars}))
    pos = {d: i for i, d in enumerate(calendar)}
    col = {t: j for j, t in enumerate(tickers)}

    arrays = {f: np.full((len(calendar), len(tickers)), np.nan) for f in BAR_FIELDS}
    for b in bars:
        i, j = pos[pd.Timestamp(b.date)], col[b.ticker]
        for f in BAR_FIELDS:
            v = getattr(b, f)
            if v is not None:
                arrays[f][i, j] = v

    frames = {f: pd.DataFrame(a, index=calendar, columns=tickers) for f, a in arrays.items()}
    years = sorted({d.year for d in calendar})
    return UniversePanel(
        tickers=tickers,
        calendar=calendar,
        bars=frames,
        sector_map=_resolve_sectors(tickers, years, sector_labels),
    )


def load_panel(csv_path: str | Path, fmt: str = "csv-long", sectors_path: str | Path | None = None) -> UniversePanel:
    """
    Load daily OHLCV bars from a long- or wide-format CSV.

    Sector labels come from a `sector` column (long format) and/or a separate
    sector file; the file wins on conflicts.
    """
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise DataError(f"price file not found: {csv_path}")

    labels: Dict[Tuple[str, Optional[int]], str] = {}
    if fmt == "csv-long":
        bars, inline = _read_long(csv_path)
        labels.update(inline)
    elif fmt == "csv-wide":
        bars = _read_wide(csv_path)
    else:
        raise DataError(f"unknown price format '{fmt}' (expected csv-long or csv-wide)")

    if sectors_path is not None:
        labels.update(_read_sector_file(Path(sectors_path)))

    panel = bars_to_panel(bars, labels)
    logger.info("Loaded %d tickers over %d trading days from %s", panel.n_stocks, len(panel.calendar), csv_path)
    return panel


def coverage(panel: UniversePanel) -> pd.Series:
    """Fraction of calendar days with a close, per ticker."""
    return panel.close.notna().mean(axis=0)


def filter_universe(panel: UniversePanel, min_coverage: float) -> UniversePanel:
    """Keep stocks whose close coverage over the full calendar is >= min_coverage."""
    if not 0 < min_coverage <= 1:
        raise DataError(f"min_coverage must be in (0, 1], got {min_coverage}")

    cov = coverage(panel)
    keep = [t for t in panel.tickers if cov[t] >= min_coverage]
    if not keep:
        raise DataError("universe empty after filtering")

    dropped = panel.n_stocks - len(keep)
    if dropped:
        logger.info("Coverage filter dropped %d of %d tickers (min_coverage=%.3f)", dropped, panel.n_stocks, min_coverage)
    return panel.select(keep)
