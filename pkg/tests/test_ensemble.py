import numpy as np
import pytest

from conftest import make_forecast
from ensemble import fit_ensemble, predict_ensemble
from errors import ModelError


def test_weights_inverse_to_validation_mse():
    a, b = make_forecast(np.ones((3, 2)), "a"), make_forecast(np.ones((3, 2)), "b")
    model = fit_ensemble([a, b], [0.01, 0.03])
    np.testing.assert_allclose(model.weights, [0.75, 0.25])
    assert sum(model.weights) == pytest.approx(1.0)


def test_prediction_is_weighted_average_on_shared_mask():
    mask_b = np.ones((2, 2), dtype=bool)
    mask_b[0, 1] = False
    a = make_forecast([[0.2, 0.4], [0.1, 0.3]], "a")
    b = make_forecast([[0.6, 0.8], [0.5, 0.7]], "b", mask=mask_b)
    model = fit_ensemble([a, b], [0.02, 0.02])
    out = predict_ensemble(model, [b, a], model_id="sage_ensemble")
    assert out.model_id == "sage_ensemble"
    np.testing.assert_array_equal(out.mask, mask_b)
    np.testing.assert_allclose(out.values, [[0.4, 0.0], [0.3, 0.5]])


@pytest.mark.parametrize("mse", [0.0, float("nan"), -1.0])
def test_degenerate_member_rejected(mse):
    a, b = make_forecast(np.ones((2, 2)), "a"), make_forecast(np.ones((2, 2)), "b")
    with pytest.raises(ModelError, match="degenerate ensemble member 'b'"):
        fit_ensemble([a, b], [0.1, mse])


def test_needs_two_members():
    with pytest.raises(ModelError, match="at least two"):
        fit_ensemble([make_forecast(np.ones((2, 2)))], [0.1])


def test_grid_mismatch_and_missing_member():
    a = make_forecast(np.ones((2, 2)), "a")
    b = make_forecast(np.ones((2, 2)), "b", start="2022-01-03")
    model = fit_ensemble([a, b], [0.1, 0.1])
    with pytest.raises(ModelError, match="same week/ticker grid"):
        predict_ensemble(model, [a, b])
    with pytest.raises(ModelError, match="not supplied"):
        predict_ensemble(model, [a])


@pytest.mark.parametrize("seed", range(5))
def test_prediction_inside_member_envelope(seed):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.05, 0.8, (3, 6, 4))
    masks = rng.uniform(size=(3, 6, 4)) < 0.85
    members = [make_forecast(values[k], f"m{k}", mask=masks[k]) for k in range(3)]
    model = fit_ensemble(members, rng.uniform(0.001, 0.1, 3))
    out = predict_ensemble(model, members)
    shared = masks.all(axis=0)
    np.testing.assert_array_equal(out.mask, shared)
    lo, hi = values.min(axis=0), values.max(axis=0)
    assert (out.values[shared] >= lo[shared] - 1e-12).all()
    assert (out.values[shared] <= hi[shared] + 1e-12).all()
