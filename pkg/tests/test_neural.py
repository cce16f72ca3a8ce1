import numpy as np
import pytest

from errors import ModelError
from neural import (
    ParamStore,
    Tape,
    adam_step,
    add_bias,
    backprop,
    concat,
    const,
    dense_forward,
    dropout,
    gradient_check,
    load_checkpoint,
    masked_mse,
    matmul,
    mse_loss,
    relu,
    rng_for,
    run_epochs,
    save_checkpoint,
    sigmoid,
    tanh,
)


def _mlp_store(rng):
    return ParamStore({"W1": rng.standard_normal((3, 4)), "b1": rng.standard_normal(4), "W2": rng.standard_normal((8, 1)), "b2": np.zeros(1)})


def _mlp_closure(x, y):
    def closure(store, tape):
        h = dense_forward(const(x), store.var("W1"), store.var("b1"), tape)
        h = concat(tanh(h, tape), sigmoid(h, tape), tape)
        out = dense_forward(h, store.var("W2"), store.var("b2"), tape)
        return masked_mse(out, y, None, tape)
    return closure


def test_gradient_check_small_network(rng):
    store = _mlp_store(rng)
    closure = _mlp_closure(rng.standard_normal((6, 3)), rng.standard_normal((6, 1)))
    assert gradient_check(closure, store, seed=0, n_coords=50) < 1e-4


def test_matmul_gradients_by_hand():
    store = ParamStore({"W": np.array([[1.0], [2.0]])})
    x = np.array([[3.0, 4.0]])

    def closure(s, tape):
        return masked_mse(matmul(const(x), s.var("W"), tape), np.array([[0.0]]), None, tape)

    loss = backprop(closure, store)
    assert loss == pytest.approx(121.0)
    # d/dW (xW)^2 = 2 (xW) x^T
    np.testing.assert_allclose(store.grads["W"], [[66.0], [88.0]])


def test_mse_loss_masks_entries():
    loss, grad = mse_loss(np.array([1.0, 2.0, 5.0]), np.array([0.0, 0.0, 0.0]), np.array([True, True, False]))
    assert loss == pytest.approx(2.5)
    np.testing.assert_allclose(grad, [1.0, 2.0, 0.0])
    with pytest.raises(ModelError, match="zero unmasked"):
        mse_loss(np.ones(2), np.ones(2), np.zeros(2, dtype=bool))


def test_shape_mismatch_names_shapes():
    with pytest.raises(ModelError, match=r"\(2, 3\).*\(4, 1\)"):
        dense_forward(const(np.ones((2, 3))), const(np.ones((4, 1))), const(np.ones(1)))
    with pytest.raises(ModelError, match="bias"):
        add_bias(const(np.ones((2, 3))), const(np.ones(2)))


def test_dropout_modes():
    x = const(np.ones((200, 50)))
    assert dropout(x, 0.5, train=False) is x
    out = dropout(x, 0.5, train=True, rng=np.random.default_rng(0))
    kept = out.value != 0
    assert 0.4 < kept.mean() < 0.6
    np.testing.assert_allclose(out.value[kept], 2.0)
    with pytest.raises(ModelError):
        dropout(x, 1.0, train=True, rng=np.random.default_rng(0))
    with pytest.raises(ModelError, match="seeded generator"):
        dropout(x, 0.3, train=True)


def test_tape_replays_once():
    store = ParamStore({"w": np.ones((1, 1))})
    tape = Tape()
    loss = masked_mse(relu(matmul(const(np.ones((1, 1))), store.var("w"), tape), tape), np.zeros((1, 1)), None, tape)
    tape.backward(loss)
    with pytest.raises(ModelError, match="already replayed"):
        tape.backward(loss)


def test_adam_first_step_moves_by_lr():
    store = ParamStore({"w": np.array([1.0, -1.0])})
    store.grads["w"][:] = [0.5, -2.0]
    new = adam_step(store, lr=0.1)
    np.testing.assert_allclose(new.params["w"], [0.9, -0.9], atol=1e-6)
    assert new.step == 1
    np.testing.assert_array_equal(new.grads["w"], 0.0)
    np.testing.assert_array_equal(store.params["w"], [1.0, -1.0])


def test_adam_rejects_non_finite_gradient():
    store = ParamStore({"w": np.zeros(2)})
    store.grads["w"][0] = np.nan
    with pytest.raises(ModelError, match="non-finite gradient in parameter 'w'"):
        adam_step(store, 0.01)


def test_substreams_are_independent_and_reproducible():
    a = rng_for(7, "init", "m").random(3)
    b = rng_for(7, "init", "m").random(3)
    c = rng_for(7, "dropout", "m").random(3)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_checkpoint_round_trip(tmp_path, rng):
    store = _mlp_store(rng)
    store.first_moment["W1"][:] = 0.25
    store.step = 4
    save_checkpoint(store, tmp_path / "ckpt.npz", seed=9, meta={"model": "mlp"})
    loaded, header = load_checkpoint(tmp_path / "ckpt.npz")
    assert header["seed"] == 9 and header["meta"] == {"model": "mlp"}
    assert loaded.step == 4
    for name in store.names():
        np.testing.assert_array_equal(loaded.params[name], store.params[name])
    np.testing.assert_array_equal(loaded.first_moment["W1"], 0.25)


def test_run_epochs_keeps_best_and_stops_early():
    store = ParamStore({"w": np.zeros(1)})
    val_curve = iter([5.0, 3.0, 4.0, 4.5, 6.0, 7.0])

    def epoch(s, k):
        nxt = s.copy()
        nxt.params["w"] = s.params["w"] + 1.0
        return nxt, 1.0

    def validate(s):
        return next(val_curve)

    best, val, epochs = run_epochs(store, epoch, validate, max_epochs=50, patience=2, describe="toy")
    assert val == 3.0
    assert best.params["w"][0] == 1.0
    assert epochs == 3


def test_run_epochs_reports_divergence():
    store = ParamStore({"w": np.zeros(1)})

    def epoch(s, k):
        return s, float("nan")

    with pytest.raises(ModelError, match="diverged at epoch 1 .*lr=0.5"):
        run_epochs(store, epoch, lambda s: 1.0, 5, 2, "toy (lr=0.5)")


def test_zero_epochs_returns_initial_store():
    store = ParamStore({"w": np.ones(1)})
    best, val, epochs = run_epochs(store, lambda s, k: (s, 0.0), lambda s: 2.0, 0, 3, "toy")
    assert epochs == 0 and val == 2.0
    np.testing.assert_array_equal(best.params["w"], 1.0)


@pytest.mark.parametrize("rate", [0.1, 0.3])
def test_dropout_preserves_mean_over_many_masks(rate):
    x = const(np.array([[1.0, -2.0, 0.5], [3.0, -0.25, 4.0]]))
    rng = np.random.default_rng(2024)
    total = np.zeros(x.shape)
    n_masks = 100_000
    for _ in range(n_masks):
        total += dropout(x, rate, train=True, rng=rng).value
    mean = total / n_masks
    np.testing.assert_array_less(np.abs(mean - x.value), 0.01 * np.abs(x.value))
