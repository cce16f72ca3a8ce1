from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import pandas as pd

from config import parse_roster_entry
from models import AccuracyReport, PortfolioReport, RankReport

EQUAL_WEIGHT_ID = "equal"

GROUPS = (
    ("baselines", "Baselines"),
    ("graph", "Graph models without macro features"),
    ("graph_macro", "Graph models with macro features"),
)

ACCURACY_COLUMNS = ("Model", "MSE", "MAE", "R2", "DA")
RANKING_COLUMNS = ("Model", "Mean IC", "ICIR", "Top-Q HR", "Pair Acc.")
PORTFOLIO_COLUMNS = ("Model", "Ann. Ret.", "Ann. Vol.", "Sharpe", "Max DD", "Avg. Turn.")

CONSTRUCTION_TITLES = {
    "inverse_vol": "Inverse-volatility",
    "long_short": "Long-short volatility",
    "min_variance": "Minimum-variance",
    "vol_target": "Volatility-targeting",
}


# --------------------------------------------------------------------
# Naming and grouping
# --------------------------------------------------------------------

def display_name(model_id: str) -> str:
    """Human-readable table label for a roster id, e.g. "GNN-Correlation (63d) + Macro"."""
    if model_id == EQUAL_WEIGHT_ID:
        return "Equal weight"
    try:
        entry = parse_roster_entry(model_id)
    except ValueError:
        return model_id

    if entry.kind == "har_per_stock":
        base = "HAR (per-stock)"
    elif entry.kind == "har_pooled":
        base = "HAR (pooled)"
    elif entry.kind == "lstm":
        base = "LSTM"
    elif entry.kind == "ensemble":
        base = "GNN-Ensemble"
    elif entry.family == "correlation":
        base = f"GNN-Correlation ({entry.window}d)"
    else:
        base = f"GNN-{entry.family.capitalize()}"
    return base + (" + Macro" if entry.macro else "")


def group_of(model_id: str) -> str:
    """Baselines are HAR, LSTM and equal weight; graph models split by macro conditioning."""
    if model_id == EQUAL_WEIGHT_ID:
        return "baselines"
    try:
        entry = parse_roster_entry(model_id)
    except ValueError:
        return "baselines"
    if not entry.is_graph_model:
        return "baselines"
    return "graph_macro" if entry.macro else "graph"


def ordered_ids(model_ids: Iterable[str], roster: Optional[Sequence[str]] = None) -> List[str]:
    """
    Group order first, then roster order within a group (alphabetical for
    ids the roster does not list). Equal weight leads the baselines.
    """
    roster = list(roster or [])
    group_rank = {key: i for i, (key, _) in enumerate(GROUPS)}

    def key(model_id: str):
        within = -1 if model_id == EQUAL_WEIGHT_ID else (roster.index(model_id) if model_id in roster else len(roster))
        return (group_rank[group_of(model_id)], within, model_id)

    return sorted(set(model_ids), key=key)


# --------------------------------------------------------------------
# Formatting
# --------------------------------------------------------------------

def _fmt(value: Optional[float], decimals: int) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return ""
    return f"{value:.{decimals}f}"


def _table(rows: List[Dict[str, str]], columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=["Group", *columns])


# --------------------------------------------------------------------
# Table builders
# --------------------------------------------------------------------

def accuracy_table(reports: Sequence[AccuracyReport], roster: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Model, MSE, MAE, R2, DA; MSE and MAE at four decimals, the rest at three."""
    by_id = {r.model_id: r for r in reports}
    rows = []
    for model_id in ordered_ids(by_id, roster):
        r = by_id[model_id]
        rows.append(
            {
                "Group": dict(GROUPS)[group_of(model_id)],
                "Model": display_name(model_id),
                "MSE": _fmt(r.mse, 4),
                "MAE": _fmt(r.mae, 4),
                "R2": _fmt(r.r2, 3),
                "DA": _fmt(r.directional_accuracy, 3),
            }
        )
    return _table(rows, ACCURACY_COLUMNS)


def ranking_table(reports: Sequence[RankReport], roster: Optional[Sequence[str]] = None) -> pd.DataFrame:
    by_id = {r.model_id: r for r in reports}
    rows = []
    for model_id in ordered_ids(by_id, roster):
        r = by_id[model_id]
        rows.append(
            {
                "Group": dict(GROUPS)[group_of(model_id)],
                "Model": display_name(model_id),
                "Mean IC": _fmt(r.mean_ic, 3),
                "ICIR": _fmt(r.icir, 3),
                "Top-Q HR": _fmt(r.top_quintile_hit_rate, 3),
                "Pair Acc.": _fmt(r.pairwise_accuracy, 3),
            }
        )
    return _table(rows, RANKING_COLUMNS)


def portfolio_table(
    reports: Sequence[PortfolioReport],
    construction: str,
    roster: Optional[Sequence[str]] = None,
) -> pd.DataFrame:
    """
    One construction's rows; the equal-weight benchmark report (model_id
    "equal") belongs in `reports` and lands at the top of the baselines.
    """
    by_id = {r.model_id: r for r in reports if r.construction in (construction, EQUAL_WEIGHT_ID)}
    rows = []
    for model_id in ordered_ids(by_id, roster):
        r = by_id[model_id]
        rows.append(
            {
                "Group": dict(GROUPS)[group_of(model_id)],
                "Model": display_name(model_id),
                "Ann. Ret.": _fmt(r.ann_return, 3),
                "Ann. Vol.": _fmt(r.ann_vol, 3),
                "Sharpe": _fmt(r.sharpe, 3),
                "Max DD": _fmt(r.max_drawdown, 3),
                "Avg. Turn.": _fmt(r.avg_turnover, 3),
            }
        )
    return _table(rows, PORTFOLIO_COLUMNS)


def build_tables(
    accuracy: Sequence[AccuracyReport],
    ranking: Sequence[RankReport],
    portfolios: Mapping[str, Sequence[PortfolioReport]],
    roster: Optional[Sequence[str]] = None,
) -> Dict[str, pd.DataFrame]:
    """
    All result tables keyed by file stem: "accuracy", "ranking" and
    "portfolio_<construction>" for each construction in `portfolios`.
    """
    tables = {
        "accuracy": accuracy_table(accuracy, roster),
        "ranking": ranking_table(ranking, roster),
    }
    for construction in sorted(portfolios):
        tables[f"portfolio_{construction}"] = portfolio_table(portfolios[construction], construction, roster)
    return tables


def write_tables(tables: Mapping[str, pd.DataFrame], out_dir: str | Path) -> List[Path]:
    """Write each table as table_<name>.csv; cells are preformatted strings, so bytes are stable."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(tables):
        path = out_dir / f"table_{name}.csv"
        tables[name].to_csv(path, index=False, lineterminator="\n")
        paths.append(path)
    return paths


def read_tables(out_dir: str | Path) -> Dict[str, pd.DataFrame]:
    """Tables of a finished run, as strings exactly as written."""
    out = {}
    for path in sorted(Path(out_dir).glob("table_*.csv")):
        out[path.stem[len("table_"):]] = pd.read_csv(path, dtype=str, keep_default_na=False)
    return out


# --------------------------------------------------------------------
# Plain-text summary for the terminal
# --------------------------------------------------------------------

def _best(table: pd.DataFrame, column: str, lowest: bool) -> Optional[str]:
    values = pd.to_numeric(table[column], errors="coerce")
    if values.isna().all():
        return None
    pos = values.idxmin() if lowest else values.idxmax()
    return f"{table.loc[pos, 'Model']} ({table.loc[pos, column]})"


def summarize_tables(tables: Mapping[str, pd.DataFrame]) -> str:
    """
    A few factual bullets: which model leads each table on its headline metric.
    Nothing beyond what the tables already hold.
    """
    bullets: List[str] = []
    acc = tables.get("accuracy")
    if acc is not None and len(acc):
        bullets.append(f"- {len(acc)} models scored on the test range.")
        best = _best(acc, "MSE", lowest=True)
        if best:
            bullets.append(f"- Lowest MSE: {best}.")
    rank = tables.get("ranking")
    if rank is not None and len(rank):
        best = _best(rank, "Mean IC", lowest=False)
        if best:
            bullets.append(f"- Highest mean rank IC: {best}.")
    for name in sorted(tables):
        if not name.startswith("portfolio_"):
            continue
        construction = name[len("portfolio_"):]
        best = _best(tables[name], "Sharpe", lowest=False)
        if best:
            title = CONSTRUCTION_TITLES.get(construction, construction)
            bullets.append(f"- {title} portfolio, best Sharpe: {best}.")
    if not bullets:
        return "- No result tables were found."
    return "\n".join(bullets)
