from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from errors import ModelError
from models import EnsembleModel, ForecastMatrix

logger = logging.getLogger(__name__)


def fit_ensemble(members: Sequence[ForecastMatrix], validation_mses: Sequence[float]) -> EnsembleModel:
    """Weights proportional to 1 / validation MSE, normalized to sum to 1."""
    if len(members) < 2:
        raise ModelError(f"ensemble needs at least two members, got {len(members)}")
    if len(members) != len(validation_mses):
        raise ModelError("one validation MSE per ensemble member is required")
    mses = np.asarray(validation_mses, dtype=float)
    for member, mse in zip(members, mses):
        if not np.isfinite(mse) or mse <= 0:
            raise ModelError(f"degenerate ensemble member '{member.model_id}' with validation MSE {mse}")
    inverse = 1.0 / mses
    weights = inverse / inverse.sum()
    logger.info(
        "Ensemble weights: %s",
        ", ".join(f"{m.model_id}={w:.3f}" for m, w in zip(members, weights)),
    )
    return EnsembleModel(member_ids=tuple(m.model_id for m in members), weights=tuple(float(w) for w in weights))


def predict_ensemble(model: EnsembleModel, members: Sequence[ForecastMatrix], model_id: str = "ensemble") -> ForecastMatrix:
    """Weighted average of member predictions on the intersection of their masks."""
    by_id = {m.model_id: m for m in members}
    missing = [mid for mid in model.member_ids if mid not in by_id]
    if missing:
        raise ModelError(f"ensemble members not supplied: {missing}")
    ordered = [by_id[mid] for mid in model.member_ids]
    first = ordered[0]
    for m in ordered[1:]:
        if not (m.weeks.equals(first.weeks) and list(m.tickers) == list(first.tickers)):
            raise ModelError(f"member '{m.model_id}' is not on the same week/ticker grid as '{first.model_id}'")

    mask = np.logical_and.reduce([m.mask for m in ordered])
    values = sum(w * m.values for w, m in zip(model.weights, ordered))
    return ForecastMatrix(
        model_id=model_id,
        weeks=first.weeks,
        target_weeks=first.target_weeks,
        tickers=list(first.tickers),
        values=np.where(mask, np.maximum(values, 0.0), 0.0),
        mask=mask,
    )
