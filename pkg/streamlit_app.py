import json
from pathlib import Path

import pandas as pd
import streamlit as st

from config import validate_config
from errors import ConfigError, StageError
from main_vol_engine import run_engine_for_config
from report_tables import CONSTRUCTION_TITLES, read_tables, summarize_tables


# ---------- BASIC PAGE CONFIG & LIGHT CSS ----------
st.set_page_config(
    page_title="Volatility Lab",
    page_icon="📈",
    layout="wide",
)

st.markdown(
    """
    <style>
    .stApp {
        background-color: #f5f7fb;
    }
    .block-container {
        padding-top: 2rem;
        padding-bottom: 2rem;
    }
    </style>
    """,
    unsafe_allow_html=True,
)


def _show_run(run_dir: Path) -> None:
    tables = read_tables(run_dir)
    if not tables:
        st.warning(f"No result tables found under `{run_dir}`.")
        return

    manifest_path = run_dir / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8")) if manifest_path.exists() else {}

    # ---------- TOP METRICS ----------
    st.markdown(f"#### Run `{run_dir}`")
    col1, col2, col3 = st.columns([1, 1, 2])
    with col1:
        st.metric("Models", len(tables.get("accuracy", [])))
    with col2:
        st.metric("Seed", manifest.get("seed", "?"))
    with col3:
        with st.expander("Manifest", expanded=False):
            st.json(manifest)

    st.markdown("---")

    st.subheader("Summary")
    for line in summarize_tables(tables).splitlines():
        st.write(line)

    st.markdown("---")

    # ---------- RESULT TABLES ----------
    if "accuracy" in tables:
        st.subheader("Forecast accuracy (test range)")
        st.dataframe(tables["accuracy"], hide_index=True)
    if "ranking" in tables:
        st.subheader("Cross-sectional ranking")
        st.dataframe(tables["ranking"], hide_index=True)
    for name in sorted(tables):
        if name.startswith("portfolio_"):
            construction = name[len("portfolio_"):]
            st.subheader(f"{CONSTRUCTION_TITLES.get(construction, construction)} portfolio")
            st.dataframe(tables[name], hide_index=True)

    dispersion_path = run_dir / "dispersion.csv"
    if dispersion_path.exists():
        with st.expander("Forecast dispersion vs. graph density", expanded=False):
            frame = pd.read_csv(dispersion_path)
            st.dataframe(frame.pivot(index="week", columns="model", values="dispersion"))


# ---------- SIDEBAR ----------
st.sidebar.title("Settings")

run_dir = Path(st.sidebar.text_input("Run directory", value="runs/default"))
config_path = st.sidebar.text_input("Config file (for a new run)", value="configs/default.yaml")

st.markdown("### 📈 Volatility Forecasting Lab")
st.caption("Weekly realized-volatility forecasts, ranking quality and portfolio results.")

if st.sidebar.button("Run experiment"):
    try:
        cfg = validate_config(config_path)
    except ConfigError as exc:
        st.error("Config is invalid:\n\n" + "\n".join(f"- {d}" for d in exc.diagnostics))
    else:
        with st.spinner("Running the pipeline..."):
            try:
                output = run_engine_for_config(cfg, run_dir)
            except StageError as exc:
                st.error(str(exc))
            else:
                st.success(f"Stages completed: {', '.join(output['stages_run'])}")
    _show_run(run_dir)
elif run_dir.exists():
    _show_run(run_dir)
else:
    st.info(
        "Enter the directory of a finished run, or pick a config file and click "
        "**Run experiment** to produce one."
    )
