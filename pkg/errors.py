"""Exception types shared across the lab.

Everything raised on purpose derives from ``VolLabError`` so the CLI can map
it to an exit code without swallowing programming errors.
"""

from __future__ import annotations

from typing import List


class VolLabError(Exception):
    """Base class for expected, user-facing failures."""


class DataError(VolLabError):
    """Bad input data: parse failures, duplicate keys, nonpositive closes."""


class FeatureError(VolLabError):
    """Feature assembly problems such as week-grid mismatches."""


class GraphError(VolLabError):
    """Graph construction problems (missing sector labels, node mismatch)."""


class CollinearLagsError(GraphError):
    """Granger regression design is singular."""

    def __init__(self, message: str = "collinear lags") -> None:
        super().__init__(message)


class ModelError(VolLabError):
    """Shape mismatches, non-finite gradients, singular fits, divergence."""


class EvaluationError(VolLabError):
    """Metric cannot be computed (empty intersection, degenerate series)."""


class PortfolioError(VolLabError):
    """Infeasible constraints or broken accounting inputs."""


class ConfigError(VolLabError):
    """Config failed validation; ``diagnostics`` lists every problem found."""

    def __init__(self, diagnostics: List[str]) -> None:
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics) or "invalid config")


class StageError(VolLabError):
    """A pipeline stage failed; carries the stage name for the CLI."""

    def __init__(self, stage: str, message: str) -> None:
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {message}")
