"""
Experiment configuration: a YAML file validated against pydantic models.

Unknown keys are rejected at every level, every default is resolved, and a
validation failure reports all problems at once.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigError
from grid_search import FULL_GRID, FULL_THRESHOLDS

logger = logging.getLogger(__name__)

HAR_ENTRIES = ("har_per_stock", "har_pooled")
DEFAULT_ROSTER = [
    "har_per_stock",
    "har_pooled",
    "lstm",
    "sage_corr:63",
    "sage_corr:252",
    "sage_sector",
    "sage_granger",
    "ensemble",
    "sage_corr:21+macro",
    "sage_corr:63+macro",
    "sage_corr:126+macro",
    "sage_corr:252+macro",
    "sage_sector+macro",
    "sage_granger+macro",
    "ensemble+macro",
]


@dataclass(frozen=True)
class RosterEntry:
    """One model in the roster, e.g. "sage_corr:63+macro"."""
    name: str
    kind: str  # har_per_stock | har_pooled | lstm | sage | ensemble
    family: Optional[str] = None  # correlation | sector | granger for sage
    window: Optional[int] = None
    macro: bool = False

    @property
    def is_graph_model(self) -> bool:
        return self.kind in ("sage", "ensemble")


def parse_roster_entry(raw: str) -> RosterEntry:
    name = raw.strip()
    base, macro = (name[: -len("+macro")], True) if name.endswith("+macro") else (name, False)
    if base in HAR_ENTRIES:
        if macro:
            raise ValueError(f"'{name}': HAR is a pure autoregression and takes no macro channels")
        return RosterEntry(name, base)
    if base == "lstm":
        return RosterEntry(name, "lstm", macro=macro)
    if base == "ensemble":
        return RosterEntry(name, "ensemble", macro=macro)
    if base == "sage_sector":
        return RosterEntry(name, "sage", "sector", macro=macro)
    if base == "sage_granger":
        return RosterEntry(name, "sage", "granger", macro=macro)
    if base.startswith("sage_corr:"):
        window = base.split(":", 1)[1]
        if not window.isdigit() or int(window) < 2:
            raise ValueError(f"'{name}': correlation window must be an integer >= 2")
        return RosterEntry(name, "sage", "correlation", int(window), macro)
    raise ValueError(f"'{name}' is not a known model")


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticSection(StrictModel):
    n_stocks: int = Field(20, ge=4)
    n_days: int = Field(1500, ge=300)
    seed: Optional[int] = None  # falls back to the run seed
    spillover_strength: float = Field(0.5, ge=0.0)
    n_sectors: int = Field(4, ge=1)
    n_neighbors: int = Field(2, ge=1)
    start_date: date = date(2015, 1, 5)


class DataSection(StrictModel):
    source: Literal["synthetic", "file"] = "synthetic"
    path: Optional[str] = None
    format: Literal["csv-long", "csv-wide"] = "csv-long"
    sectors_path: Optional[str] = None
    market_inputs_path: Optional[str] = None
    min_coverage: float = Field(0.9, ge=0.0, le=1.0)
    synthetic: SyntheticSection = Field(default_factory=SyntheticSection)

    @model_validator(mode="after")
    def _file_needs_path(self) -> "DataSection":
        if self.source == "file" and not self.path:
            raise ValueError("data.path is required when data.source is 'file'")
        return self


class SplitSection(StrictModel):
    train_end: Optional[date] = None
    validation_end: Optional[date] = None
    train_fraction: float = Field(0.6, gt=0.0, lt=1.0)
    validation_fraction: float = Field(0.2, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _consistent(self) -> "SplitSection":
        if (self.train_end is None) != (self.validation_end is None):
            raise ValueError("give both train_end and validation_end, or neither")
        if self.train_end is not None and self.train_end >= self.validation_end:
            raise ValueError("train_end must precede validation_end")
        if self.train_fraction + self.validation_fraction >= 1.0:
            raise ValueError("train_fraction + validation_fraction must leave a test range")
        return self


class FeatureSection(StrictModel):
    coverage_tolerance: float = Field(0.8, gt=0.0, le=1.0)
    winsor_lower: float = Field(0.01, ge=0.0, lt=0.5)
    winsor_upper: float = Field(0.99, gt=0.5, le=1.0)
    annualization_days: int = Field(252, gt=0)


class GraphSection(StrictModel):
    threshold: float = Field(0.30, ge=0.0, le=1.0)
    windows: List[int] = [21, 63, 126, 252]
    density_window: int = Field(63, ge=2)
    granger_lag: int = Field(5, ge=1)
    granger_alpha: float = Field(0.05, ge=0.0, le=1.0)

    @field_validator("windows")
    @classmethod
    def _windows(cls, value: List[int]) -> List[int]:
        if not value or any(w < 2 for w in value):
            raise ValueError("correlation windows must be integers >= 2")
        return sorted(set(value))


class TrainingSection(StrictModel):
    hidden: int = Field(64, ge=1)
    layers: int = Field(2, ge=1)
    dropout: float = Field(0.3, ge=0.0, lt=1.0)
    lr: float = Field(1e-3, gt=0.0)
    max_epochs: int = Field(200, ge=0)
    patience: int = Field(20, ge=1)
    lstm_hidden: int = Field(64, ge=1)
    lstm_layers: int = Field(2, ge=1)
    lstm_batch_size: int = Field(256, ge=1)
    lstm_window: int = Field(4, ge=1)


class GridSection(StrictModel):
    enabled: bool = False
    preset: Literal["desk", "full"] = "desk"
    thresholds: List[float] = [0.3]
    workers: int = Field(1, ge=1)


class ModelsSection(StrictModel):
    roster: List[str] = Field(default_factory=lambda: list(DEFAULT_ROSTER))
    har_proxy: Literal["window_stdev", "abs_return"] = "window_stdev"
    training: TrainingSection = Field(default_factory=TrainingSection)
    grid: GridSection = Field(default_factory=GridSection)

    @field_validator("roster")
    @classmethod
    def _roster(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("roster must name at least one model")
        problems, entries = [], []
        for raw in value:
            try:
                entries.append(parse_roster_entry(raw))
            except ValueError as exc:
                problems.append(str(exc))
        names = [e.name for e in entries]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            problems.append(f"duplicate roster entries {dupes}")
        for entry in entries:
            if entry.kind == "ensemble":
                families = {e.family for e in entries if e.kind == "sage" and e.macro == entry.macro}
                if len(families) < 2:
                    problems.append(
                        f"'{entry.name}' needs GraphSAGE members from at least two graph families with the same macro flag"
                    )
        if problems:
            raise ValueError("; ".join(problems))
        return [e.name for e in entries]


class PortfolioSection(StrictModel):
    cost_rate: float = Field(0.0010, ge=0.0)
    cap: float = Field(0.05, gt=0.0, le=1.0)
    vol_target: float = Field(0.10, gt=0.0)
    leverage_cap: float = Field(2.0, gt=0.0)
    vol_target_base: Literal["equal", "inverse_vol"] = "equal"
    risk_free_path: Optional[str] = None
    risk_free_annual: float = 0.02


class ExperimentConfig(StrictModel):
    seed: int
    output_dir: str = "runs/default"
    cache_dir: Optional[str] = None
    data: DataSection = Field(default_factory=DataSection)
    split: SplitSection = Field(default_factory=SplitSection)
    features: FeatureSection = Field(default_factory=FeatureSection)
    graphs: GraphSection = Field(default_factory=GraphSection)
    models: ModelsSection = Field(default_factory=ModelsSection)
    portfolio: PortfolioSection = Field(default_factory=PortfolioSection)

    def roster(self) -> List[RosterEntry]:
        return [parse_roster_entry(name) for name in self.models.roster]

    def correlation_windows(self) -> List[int]:
        """Windows the run needs: the configured ones plus any the roster names."""
        wanted = set(self.graphs.windows) | {self.graphs.density_window}
        wanted |= {e.window for e in self.roster() if e.window is not None}
        return sorted(wanted)

    def ensemble_members(self, entry: RosterEntry) -> List[str]:
        """One GraphSAGE entry per graph family sharing the ensemble's macro flag.

        The correlation member is the entry at the density window when the
        roster has one, otherwise the first correlation entry in roster order.
        """
        candidates = [e for e in self.roster() if e.kind == "sage" and e.macro == entry.macro]
        chosen: Dict[str, RosterEntry] = {}
        for e in candidates:
            if e.family not in chosen:
                chosen[e.family] = e
            elif e.family == "correlation" and e.window == self.graphs.density_window:
                chosen[e.family] = e
        return [e.name for e in candidates if chosen.get(e.family) is e]

    def section(self, name: str) -> dict:
        return getattr(self, name).model_dump(mode="json")


def _diagnostics(exc: ValidationError) -> List[str]:
    out = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if err["type"] == "extra_forbidden":
            msg = f"unknown key '{err['loc'][-1]}'"
        out.append(f"{where}: {msg}")
    return out


def validate_config(path: str | Path, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate a config file; ConfigError lists every problem found."""
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"YAML parse error in {path}: {exc}"]) from exc
    return validate_mapping(raw if raw is not None else {}, seed_override)


def validate_mapping(raw: object, seed_override: Optional[int] = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError([f"config root must be a mapping, got {type(raw).__name__}"])
    raw = dict(raw)
    if seed_override is not None:
        raw["seed"] = seed_override
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_diagnostics(exc)) from exc


def echo_config(cfg: ExperimentConfig) -> str:
    """Fully resolved config as YAML; feeding it back validates to the same config."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True, default_flow_style=False)


def stable_hash(payload: object) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode("utf-8")).hexdigest()


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of everything that affects results (output and cache locations excluded)."""
    return stable_hash(cfg.model_dump(mode="json", exclude={"output_dir", "cache_dir"}))


def synthetic_seed(cfg: ExperimentConfig) -> int:
    seed = cfg.data.synthetic.seed
    return cfg.seed if seed is None else seed


def grid_space(cfg: ExperimentConfig, family: Optional[str]) -> Dict[str, list]:
    """Hyperparameter values searched for one GraphSAGE family."""
    t = cfg.models.training
    if cfg.models.grid.preset == "full":
        space = {k: list(v) for k, v in FULL_GRID.items()}
    else:
        space = {
            "lr": sorted({t.lr, t.lr * 10}),
            "hidden": sorted({max(1, t.hidden // 2), t.hidden}),
            "layers": [t.layers],
            "dropout": [t.dropout],
        }
    if family == "correlation":
        space["threshold"] = grid_thresholds(cfg)
    return space


def grid_thresholds(cfg: ExperimentConfig) -> List[float]:
    """Correlation thresholds the grid searches; the full preset uses its own set."""
    if cfg.models.grid.preset == "full":
        return list(FULL_THRESHOLDS)
    return list(cfg.models.grid.thresholds)
