import numpy as np
import pytest

from conftest import make_tensor
from errors import ModelError
from lstm import init_lstm_params, lstm_forward, lstm_head, predict_lstm, stock_windows, train_lstm
from neural import gradient_check, masked_mse


def test_gradient_check_three_steps(rng):
    store = init_lstm_params(rng, input_width=3, hidden=4, layers=2)
    x = rng.standard_normal((5, 3, 3))
    y = rng.standard_normal((5, 1))

    def closure(s, tape):
        return masked_mse(lstm_head(s, x, layers=2, tape=tape), y, None, tape)

    assert gradient_check(closure, store, seed=2, n_coords=60) < 1e-4


def test_single_step_matches_hand_computation(rng):
    store = init_lstm_params(rng, input_width=2, hidden=3, layers=1)
    x = rng.standard_normal((1, 1, 2))
    z = x[0, 0] @ store.params["lstm0.W"] + store.params["lstm0.b"]
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i, g, o = sig(z[0:3]), np.tanh(z[6:9]), sig(z[9:12])
    expected = o * np.tanh(i * g)
    np.testing.assert_allclose(lstm_forward(store, x, layers=1).value[0], expected, rtol=1e-12)


def test_forget_bias_starts_at_one(rng):
    bias = init_lstm_params(rng, 3, 4, 1).params["lstm0.b"]
    np.testing.assert_array_equal(bias, [0] * 4 + [1] * 4 + [0] * 8)


def test_two_dimensional_input_is_a_batch_of_one(rng):
    store = init_lstm_params(rng, 3, 4, 2)
    x = rng.standard_normal((4, 3))
    np.testing.assert_allclose(lstm_forward(store, x, 2).value, lstm_forward(store, x[None], 2).value)


def test_width_mismatch_raises(rng):
    store = init_lstm_params(rng, 3, 4, 1)
    with pytest.raises(ModelError, match="does not match"):
        lstm_forward(store, rng.standard_normal((2, 4, 5)), 1)


def test_stock_windows_need_full_history():
    tensor = make_tensor(n_weeks=8, n_stocks=2)
    tensor.feature_mask[5, 1] = False
    valid, pairs = stock_windows(tensor, window=4)
    assert not valid[:3].any()
    assert valid[3:, 0].all()
    # stock 1 loses every origin whose window covers week 5
    assert valid[:, 1].tolist() == [False, False, False, True, True, False, False, False]
    assert len(pairs) == valid.sum()


def test_train_and_predict_small():
    tensor = make_tensor(n_weeks=16, n_stocks=4, seed=5)
    model = train_lstm(tensor, hidden=6, layers=2, dropout_rate=0.1, lr=1e-2, max_epochs=4, patience=2, batch_size=8, seed=1)
    assert 1 <= model.epochs_run <= 4
    assert np.isfinite(model.validation_mse)
    forecast = predict_lstm(model, tensor)
    assert forecast.model_id == "lstm"
    assert not forecast.mask[:3].any()
    assert forecast.mask[3:].all()
    assert (forecast.values >= 0).all()


def test_macro_inputs_widen_the_first_layer():
    tensor = make_tensor(n_weeks=16, n_stocks=4, seed=5)
    plain = train_lstm(tensor, hidden=4, max_epochs=1, batch_size=16)
    macro = train_lstm(tensor, hidden=4, max_epochs=1, batch_size=16, with_macro=True, model_id="lstm+macro")
    width = tensor.stock_features.shape[2]
    assert plain.store.params["lstm0.W"].shape[0] == width
    assert macro.store.params["lstm0.W"].shape[0] == width + tensor.macro_features.shape[1]


def test_same_seed_same_weights():
    tensor = make_tensor(n_weeks=16, n_stocks=4, seed=5)
    a = train_lstm(tensor, hidden=4, max_epochs=2, batch_size=8, seed=9)
    b = train_lstm(tensor, hidden=4, max_epochs=2, batch_size=8, seed=9)
    for name in a.store.names():
        np.testing.assert_array_equal(a.store.params[name], b.store.params[name])


def test_window_longer_than_training_range_raises():
    tensor = make_tensor(n_weeks=8, n_stocks=2)
    with pytest.raises(ModelError, match="no training samples"):
        train_lstm(tensor, window=6, max_epochs=1)
