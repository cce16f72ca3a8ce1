import pandas as pd

from models import AccuracyReport, PortfolioReport, RankReport
from report_tables import (
    build_tables,
    display_name,
    group_of,
    ordered_ids,
    read_tables,
    summarize_tables,
    write_tables,
)

ROSTER = ["har_per_stock", "lstm", "sage_corr:63", "sage_sector+macro", "ensemble+macro"]


def _accuracy(model_id, mse):
    return AccuracyReport(model_id=model_id, mse=mse, mae=0.1, r2=float("nan"), directional_accuracy=0.55, n_obs=10)


def _rank(model_id, ic):
    return RankReport(
        model_id=model_id, mean_ic=ic, icir=1.0, top_quintile_hit_rate=0.4, pairwise_accuracy=0.6,
        weekly_ic=pd.Series(dtype=float),
    )


def _portfolio(model_id, construction, sharpe):
    return PortfolioReport(model_id, construction, 0.08, 0.15, sharpe, -0.2, 0.3)


def test_display_names():
    assert display_name("har_per_stock") == "HAR (per-stock)"
    assert display_name("sage_corr:63+macro") == "GNN-Correlation (63d) + Macro"
    assert display_name("sage_granger") == "GNN-Granger"
    assert display_name("ensemble+macro") == "GNN-Ensemble + Macro"
    assert display_name("equal") == "Equal weight"
    assert display_name("mystery") == "mystery"


def test_grouping_and_order():
    assert group_of("lstm+macro") == "baselines"
    assert group_of("sage_sector") == "graph"
    assert group_of("sage_sector+macro") == "graph_macro"
    ids = ["ensemble+macro", "sage_corr:63", "lstm", "equal", "sage_sector+macro", "har_per_stock"]
    assert ordered_ids(ids, ROSTER) == [
        "equal", "har_per_stock", "lstm", "sage_corr:63", "sage_sector+macro", "ensemble+macro",
    ]


def test_tables_format_and_blank_nan():
    tables = build_tables(
        [_accuracy("lstm", 0.031234567), _accuracy("har_per_stock", 0.0298)],
        [_rank("lstm", 0.12), _rank("har_per_stock", 0.2)],
        {"min_variance": [_portfolio("equal", "equal", 0.5), _portfolio("lstm", "min_variance", 0.984)]},
        ROSTER,
    )
    assert set(tables) == {"accuracy", "ranking", "portfolio_min_variance"}
    acc = tables["accuracy"]
    assert list(acc.columns) == ["Group", "Model", "MSE", "MAE", "R2", "DA"]
    assert acc["Model"].tolist() == ["HAR (per-stock)", "LSTM"]
    assert acc["MSE"].tolist() == ["0.0298", "0.0312"]
    assert acc["R2"].tolist() == ["", ""]
    port = tables["portfolio_min_variance"]
    assert port["Model"].tolist() == ["Equal weight", "LSTM"]
    assert port["Sharpe"].tolist() == ["0.500", "0.984"]


def test_portfolio_table_ignores_other_constructions():
    tables = build_tables([], [], {"long_short": [_portfolio("lstm", "inverse_vol", 1.0)]}, ROSTER)
    assert tables["portfolio_long_short"].empty


def test_write_read_and_summary(tmp_path):
    tables = build_tables(
        [_accuracy("lstm", 0.03), _accuracy("sage_corr:63", 0.02)],
        [_rank("lstm", 0.1), _rank("sage_corr:63", 0.3)],
        {"inverse_vol": [_portfolio("equal", "equal", 0.4), _portfolio("lstm", "inverse_vol", 0.7)]},
        ROSTER,
    )
    paths = write_tables(tables, tmp_path)
    assert [p.name for p in paths] == ["table_accuracy.csv", "table_portfolio_inverse_vol.csv", "table_ranking.csv"]
    assert b"\r\n" not in paths[0].read_bytes()
    back = read_tables(tmp_path)
    assert back["accuracy"]["R2"].tolist() == ["", ""]
    assert back["accuracy"].to_numpy().tolist() == tables["accuracy"].to_numpy().tolist()
    summary = summarize_tables(back)
    assert "- 2 models scored on the test range." in summary
    assert "Lowest MSE: GNN-Correlation (63d) (0.0200)" in summary
    assert "Highest mean rank IC: GNN-Correlation (63d) (0.300)" in summary
    assert "Inverse-volatility portfolio, best Sharpe: LSTM (0.700)" in summary


def test_summary_without_tables():
    assert summarize_tables({}) == "- No result tables were found."
