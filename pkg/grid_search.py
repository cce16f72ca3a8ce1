from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import ModelError, VolLabError

logger = logging.getLogger(__name__)

Cell = Dict[str, Any]

# Full validation grid; desk-scale runs use the smaller preset in config.grid_space.
FULL_GRID: Dict[str, List[Any]] = {
    "lr": [1e-4, 3e-4, 1e-3, 3e-3],
    "hidden": [64, 128, 256],
    "layers": [2, 3],
    "dropout": [0.1, 0.3],
}
# Correlation thresholds searched by the full preset.
FULL_THRESHOLDS: List[float] = [0.3, 0.5, 0.7]


def expand_grid(space: Mapping[str, Sequence[Any]]) -> List[Cell]:
    """Cartesian product of the declared values, keys in sorted order."""
    keys = sorted(space)
    return [dict(zip(keys, values)) for values in itertools.product(*(space[k] for k in keys))]


def cell_label(cell: Cell) -> str:
    return json.dumps(cell, sort_keys=True)


def tie_break_key(cell: Cell, mse: float) -> Tuple[float, float, float, float]:
    """Lowest MSE, then fewer layers, smaller hidden, lower learning rate."""
    return (mse, cell.get("layers", 0), cell.get("hidden", 0), cell.get("lr", 0.0))


@dataclass
class GridResult:
    selected: Cell
    selected_mse: float
    report: pd.DataFrame  # columns: config, validation_mse, error
    artifacts: Dict[str, Any] = field(default_factory=dict)

    def artifact(self) -> Any:
        return self.artifacts.get(cell_label(self.selected))

    def to_csv(self, path) -> None:
        self.report.to_csv(path, index=False, float_format="%.10g")


def grid_search(
    cells: Sequence[Cell],
    evaluate: Callable[[Cell], Tuple[float, Any]],
    workers: int = 1,
    family: str = "",
) -> GridResult:
    """
    Evaluate every cell and pick the one with the lowest validation MSE.

    `evaluate` returns (validation MSE, fitted artifact). A cell that raises
    is recorded with its error and excluded; the search continues.
    """
    if not cells:
        raise ModelError("empty hyperparameter grid")

    def run(cell: Cell) -> Tuple[Cell, Optional[float], Any, str]:
        try:
            mse, artifact = evaluate(cell)
        except VolLabError as exc:
            logger.warning("Grid cell %s%s failed: %s", f"{family} " if family else "", cell_label(cell), exc)
            return cell, None, None, str(exc)
        if not np.isfinite(mse):
            return cell, None, None, f"non-finite validation MSE {mse}"
        return cell, float(mse), artifact, ""

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, cells))
    else:
        outcomes = [run(cell) for cell in cells]

    rows, artifacts, scored = [], {}, []
    for cell, mse, artifact, error in outcomes:
        label = cell_label(cell)
        rows.append({"config": label, "validation_mse": mse if mse is not None else np.nan, "error": error})
        if mse is not None:
            artifacts[label] = artifact
            scored.append((tie_break_key(cell, mse), cell))
    if not scored:
        raise ModelError(f"every grid cell failed{' for ' + family if family else ''}")

    key, best = min(scored, key=lambda item: item[0])
    logger.info("Grid %s: selected %s (validation MSE %.6f) from %d cells", family, cell_label(best), key[0], len(cells))
    return GridResult(
        selected=best,
        selected_mse=key[0],
        report=pd.DataFrame(rows, columns=["config", "validation_mse", "error"]),
        artifacts=artifacts,
    )
