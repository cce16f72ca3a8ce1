import math

import numpy as np
import pandas as pd
import pytest

from errors import DataError
from ingest_prices import coverage, filter_universe, load_panel
from models import BAR_FIELDS, UniversePanel


def _write(path, text):
    path.write_text(text.strip() + "\n", encoding="utf-8")
    return path


def test_long_format_aligns_on_union_calendar(tmp_path):
    csv = _write(
        tmp_path / "bars.csv",
        """
ticker,date,open,high,low,close,volume,sector
AAA,2024-01-02,10,11,9,10.5,1000,Tech
AAA,2024-01-03,10.5,11,10,10.8,1100,Tech
BBB,2024-01-03,20,21,19,20.5,500,Energy
""",
    )
    panel = load_panel(csv)
    assert panel.tickers == ["AAA", "BBB"]
    assert list(panel.calendar) == [pd.Timestamp("2024-01-02"), pd.Timestamp("2024-01-03")]
    assert math.isnan(panel.close.loc["2024-01-02", "BBB"])
    assert panel.sector_map[2024] == {"AAA": "Tech", "BBB": "Energy"}


def test_wide_format_reads_close_and_fields(tmp_path):
    csv = _write(
        tmp_path / "wide.csv",
        """
date,AAA,AAA:volume,BBB
2024-01-02,10,100,20
2024-01-03,11,,21
""",
    )
    panel = load_panel(csv, fmt="csv-wide")
    assert panel.close.loc["2024-01-03", "AAA"] == 11
    assert math.isnan(panel.volume.loc["2024-01-03", "AAA"])
    assert panel.sector_map[2024]["BBB"] == "Unclassified"


def test_duplicate_key_reports_row(tmp_path):
    csv = _write(
        tmp_path / "dup.csv",
        """
ticker,date,close
AAA,2024-01-02,10
AAA,2024-01-02,11
""",
    )
    with pytest.raises(DataError, match=r"duplicate key \(AAA, 2024-01-02\) at row 3"):
        load_panel(csv)


def test_nonpositive_close_rejected(tmp_path):
    csv = _write(tmp_path / "bad.csv", "ticker,date,close\nAAA,2024-01-02,0\n")
    with pytest.raises(DataError, match="row 2"):
        load_panel(csv)


def test_malformed_number_reports_column(tmp_path):
    csv = _write(tmp_path / "bad.csv", "ticker,date,close\nAAA,2024-01-02,ten\n")
    with pytest.raises(DataError, match="column 'close'"):
        load_panel(csv)


def test_sector_file_overrides_inline_labels(tmp_path):
    bars = _write(tmp_path / "bars.csv", "ticker,date,close,sector\nAAA,2024-01-02,10,Tech\n")
    sectors = _write(tmp_path / "sectors.csv", "ticker,sector,year\nAAA,Health,2024\n")
    panel = load_panel(bars, sectors_path=sectors)
    assert panel.sector_map[2024]["AAA"] == "Health"


def test_coverage_filter(tmp_path):
    csv = _write(
        tmp_path / "bars.csv",
        """
ticker,date,close
AAA,2024-01-02,10
AAA,2024-01-03,10
AAA,2024-01-04,10
AAA,2024-01-05,10
BBB,2024-01-05,20
""",
    )
    panel = load_panel(csv)
    assert coverage(panel)["BBB"] == pytest.approx(0.25)
    assert filter_universe(panel, 0.9).tickers == ["AAA"]
    with pytest.raises(DataError, match="universe empty"):
        filter_universe(panel.select(["BBB"]), 0.9)


@pytest.mark.parametrize("seed", range(5))
def test_coverage_filter_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    calendar = pd.bdate_range("2024-01-01", periods=60)
    tickers = [f"T{i}" for i in range(6)]
    close = pd.DataFrame(rng.uniform(10, 20, (60, 6)), index=calendar, columns=tickers)
    gap_rate = np.concatenate([[0.0], rng.uniform(0.0, 0.4, 5)])
    close = close.mask(rng.uniform(size=close.shape) < gap_rate)
    panel = UniversePanel(
        tickers=tickers,
        calendar=calendar,
        bars={f: close.copy() for f in BAR_FIELDS},
        sector_map={2024: {t: "X" for t in tickers}},
    )
    once = filter_universe(panel, 0.8)
    twice = filter_universe(once, 0.8)
    assert twice.tickers == once.tickers
    pd.testing.assert_frame_equal(twice.close, once.close)
    assert (coverage(once) >= 0.8).all()
