import numpy as np
import pytest

from conftest import make_forecast
from errors import PortfolioError
from portfolio import (
    CONSTRUCTIONS,
    build_all,
    build_weights,
    vol_target_exposure,
    weights_equal,
    weights_inverse_vol,
    weights_long_short,
    weights_min_variance,
)


def _project(v, cap):
    """Euclidean projection onto {0 <= w <= cap, sum w = 1} by bisection on the shift."""
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(60):
        tau = 0.5 * (lo + hi)
        if np.clip(v - tau, 0.0, cap).sum() > 1.0:
            lo = tau
        else:
            hi = tau
    return np.clip(v - 0.5 * (lo + hi), 0.0, cap)


def _min_variance_oracle(sigma, cap, iterations=1500):
    var = sigma**2
    step = 1.0 / (2.0 * var.max())
    w = _project(np.full(len(sigma), 1.0 / len(sigma)), cap)
    for _ in range(iterations):
        w = _project(w - step * 2.0 * var * w, cap)
    return w


@pytest.mark.parametrize("seed", range(20))
def test_min_variance_matches_projected_gradient(seed):
    rng = np.random.default_rng(700 + seed)
    n = int(rng.integers(5, 26))
    sigma = rng.uniform(0.1, 0.6, n)
    # alternate loose caps with caps that bind on the quietest names
    cap = 1.0 if seed % 2 else rng.uniform(1.05 / n, 2.0 / n)
    w = weights_min_variance(sigma, cap)
    np.testing.assert_allclose(w, _min_variance_oracle(sigma, cap), atol=1e-6)
    assert w.sum() == pytest.approx(1.0)
    assert (w <= cap + 1e-12).all()


def test_min_variance_cap_binds():
    w = weights_min_variance(np.array([0.05, 0.3, 0.3, 0.3, 0.3]), cap=0.3)
    assert w[0] == pytest.approx(0.3)
    np.testing.assert_allclose(w[1:], 0.175)


def test_min_variance_infeasible_cap():
    with pytest.raises(PortfolioError, match="infeasible cap"):
        weights_min_variance(np.full(10, 0.2), cap=0.05)


def test_inverse_vol_weights_and_floor():
    w, flagged = weights_inverse_vol(np.array([0.1, 0.2, 0.4]))
    np.testing.assert_allclose(w, np.array([10.0, 5.0, 2.5]) / 17.5)
    assert not flagged
    w, flagged = weights_inverse_vol(np.array([0.0, -0.1, 0.01]))
    assert flagged
    np.testing.assert_allclose(w, 1.0 / 3.0)


def test_long_short_legs_and_ties():
    pred = np.array([0.3, 0.1, 0.5, 0.2, 0.4, 0.6])
    w = weights_long_short(pred)
    # n=6 gives legs of two stocks
    np.testing.assert_allclose(w, [0.0, 0.5, -0.5, 0.5, 0.0, -0.5])
    assert w.sum() == pytest.approx(0.0)
    tied = weights_long_short(np.full(5, 0.2))
    np.testing.assert_allclose(tied, [1.0, 0.0, 0.0, 0.0, -1.0])


def test_long_short_needs_five_stocks():
    with pytest.raises(PortfolioError, match="at least 5"):
        weights_long_short(np.ones(4))


def test_vol_target_scaling_and_cap():
    base = weights_equal(4)
    pred = np.full(4, 0.2)
    w, exposure, flagged = vol_target_exposure(pred, base, target=0.10, leverage_cap=2.0)
    # sigma_p = sqrt(4 * 0.0625 * 0.04) = 0.1
    assert exposure == pytest.approx(1.0)
    assert not flagged
    _, exposure, _ = vol_target_exposure(np.full(4, 0.02), base, target=0.10, leverage_cap=2.0)
    assert exposure == 2.0
    w, exposure, flagged = vol_target_exposure(np.zeros(4), base, 0.10, 2.0)
    assert flagged and exposure == 2.0
    np.testing.assert_allclose(w, 0.5)


def test_build_weights_uses_valid_stocks_and_holding_weeks():
    mask = np.ones((3, 6), dtype=bool)
    mask[1, 5] = False
    forecast = make_forecast(np.tile([0.1, 0.2, 0.3, 0.4, 0.5, 0.6], (3, 1)), mask=mask)
    weights = build_weights("equal", forecast)
    assert weights.weeks.equals(forecast.target_weeks)
    np.testing.assert_allclose(weights.values[1], [0.2] * 5 + [0.0])
    window = build_weights("inverse_vol", forecast, (forecast.weeks[1], forecast.weeks[2]))
    assert len(window.weeks) == 2
    np.testing.assert_allclose(window.values.sum(axis=1), 1.0)


def test_build_all_covers_every_construction():
    forecast = make_forecast(np.random.default_rng(0).uniform(0.1, 0.5, (4, 12)))
    out = build_all(forecast, cap=0.2)
    assert set(out) == set(CONSTRUCTIONS)
    np.testing.assert_allclose(out["long_short"].values.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out["min_variance"].values.sum(axis=1), 1.0)


def test_build_weights_errors():
    forecast = make_forecast(np.full((2, 5), 0.2), mask=[[True] * 5, [False] * 5])
    with pytest.raises(PortfolioError, match="no valid forecasts"):
        build_weights("equal", forecast)
    with pytest.raises(PortfolioError, match="unknown construction"):
        build_weights("risk_parity", make_forecast(np.full((1, 5), 0.2)))
    with pytest.raises(PortfolioError, match="unknown vol-target base"):
        build_weights("vol_target", make_forecast(np.full((1, 5), 0.2)), vol_target_base="hrp")


@pytest.mark.parametrize("seed", range(5))
def test_inverse_vol_and_min_variance_ignore_vol_scale(seed):
    rng = np.random.default_rng(seed)
    pred = rng.uniform(0.1, 0.8, 12)
    for k in (3.0, 0.5):
        w, flagged = weights_inverse_vol(pred)
        wk, flagged_k = weights_inverse_vol(k * pred)
        assert not flagged and not flagged_k
        np.testing.assert_allclose(wk, w, atol=1e-12)
        np.testing.assert_allclose(weights_min_variance(k * pred, cap=0.2), weights_min_variance(pred, cap=0.2), atol=1e-12)


@pytest.mark.parametrize("n", [5, 6, 9, 11, 23, 40, 101])
def test_long_short_nets_to_zero_with_gross_two(n):
    pred = np.random.default_rng(n).uniform(0.05, 0.9, n)
    w = weights_long_short(pred)
    assert abs(w.sum()) <= 1e-12
    assert abs(np.abs(w).sum() - 2.0) <= 1e-12
