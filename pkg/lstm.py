from __future__ import annotations

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from errors import ModelError
from models import FeatureTensor, ForecastMatrix, LstmModel
from neural import (
    ParamStore,
    Tape,
    Var,
    adam_step,
    add,
    add_bias,
    backprop,
    const,
    dense_forward,
    dropout,
    glorot,
    masked_mse,
    matmul,
    mul,
    rng_for,
    run_epochs,
    sigmoid,
    slice_cols,
    tanh,
)

logger = logging.getLogger(__name__)

PREDICT_CHUNK = 4096


def init_lstm_params(rng: np.random.Generator, input_width: int, hidden: int, layers: int) -> ParamStore:
    """Gate blocks ordered (input, forget, candidate, output); forget bias starts at 1."""
    params: Dict[str, np.ndarray] = {}
    width = input_width
    for layer in range(layers):
        params[f"lstm{layer}.W"] = glorot(rng, width, 4 * hidden)
        params[f"lstm{layer}.U"] = glorot(rng, hidden, 4 * hidden)
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        params[f"lstm{layer}.b"] = bias
        width = hidden
    params["head.W"] = glorot(rng, hidden, 1)
    params["head.b"] = np.zeros(1)
    return ParamStore(params)


def lstm_forward(
    store: ParamStore,
    sequences: np.ndarray,
    layers: int,
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    tape: Optional[Tape] = None,
) -> Var:
    """
    Final top-layer hidden state (B x H) for B sequences of shape T x d_in.

    A single T x d_in sequence is treated as a batch of one. States start at
    zero; dropout applies only to the outputs passed from one layer to the next.
    """
    x = np.asarray(sequences, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1] < 1:
        raise ModelError(f"expected (batch, steps, features) with at least one step, got {x.shape}")
    d_in = store.params["lstm0.W"].shape[0]
    if x.shape[2] != d_in:
        raise ModelError(f"sequence width {x.shape[2]} does not match input weights {store.params['lstm0.W'].shape}")

    batch, steps = x.shape[0], x.shape[1]
    seq = [const(x[:, t, :]) for t in range(steps)]
    for layer in range(layers):
        W, U, b = (store.var(f"lstm{layer}.{p}") for p in ("W", "U", "b"))
        hidden = U.shape[0]
        h = const(np.zeros((batch, hidden)))
        c = const(np.zeros((batch, hidden)))
        outputs = []
        for x_t in seq:
            z = add_bias(add(matmul(x_t, W, tape), matmul(h, U, tape), tape), b, tape)
            i = sigmoid(slice_cols(z, 0, hidden, tape), tape)
            f = sigmoid(slice_cols(z, hidden, 2 * hidden, tape), tape)
            g = tanh(slice_cols(z, 2 * hidden, 3 * hidden, tape), tape)
            o = sigmoid(slice_cols(z, 3 * hidden, 4 * hidden, tape), tape)
            c = add(mul(f, c, tape), mul(i, g, tape), tape)
            h = mul(o, tanh(c, tape), tape)
            outputs.append(h)
        if layer < layers - 1:
            outputs = [dropout(o_t, dropout_rate, train, rng, tape) for o_t in outputs]
        seq = outputs
    return seq[-1]


def lstm_head(
    store: ParamStore,
    sequences: np.ndarray,
    layers: int,
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    tape: Optional[Tape] = None,
) -> Var:
    h = lstm_forward(store, sequences, layers, dropout_rate, train, rng, tape)
    return dense_forward(h, store.var("head.W"), store.var("head.b"), tape)


def stock_windows(tensor: FeatureTensor, window: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """
    W x N mask of origins whose `window` weeks ending there all have valid
    features, plus those origins as (week, stock) index pairs.
    """
    valid = np.zeros_like(tensor.feature_mask)
    for w in range(window - 1, tensor.n_weeks):
        valid[w] = tensor.feature_mask[w - window + 1 : w + 1].all(axis=0)
    return valid, np.argwhere(valid)


def _gather(tensor: FeatureTensor, pairs: np.ndarray, window: int, with_macro: bool = False) -> np.ndarray:
    """(samples x window x channels) inputs; macro channels appended per week when requested."""
    offsets = np.arange(-window + 1, 1)
    weeks = pairs[:, 0][:, None] + offsets[None, :]
    x = tensor.stock_features[weeks, pairs[:, 1][:, None], :]
    if with_macro:
        x = np.concatenate([x, tensor.macro_features[weeks]], axis=2)
    return x


def _predict(store: ParamStore, x: np.ndarray, layers: int) -> np.ndarray:
    out = np.empty(len(x))
    for start in range(0, len(x), PREDICT_CHUNK):
        out[start : start + PREDICT_CHUNK] = lstm_head(store, x[start : start + PREDICT_CHUNK], layers).value[:, 0]
    return out


def train_lstm(
    tensor: FeatureTensor,
    *,
    hidden: int = 64,
    layers: int = 2,
    dropout_rate: float = 0.3,
    lr: float = 1e-3,
    max_epochs: int = 200,
    patience: int = 20,
    batch_size: int = 256,
    window: int = 4,
    seed: int = 0,
    with_macro: bool = False,
    model_id: str = "lstm",
) -> LstmModel:
    """Shared-parameter LSTM over per-stock feature windows, minibatched over (week, stock) samples."""
    valid, _ = stock_windows(tensor, window)
    usable = valid & tensor.mask
    split = {name: tensor.split.mask(tensor.weeks, name)[:, None] & usable for name in ("train", "validation")}
    train_pairs = np.argwhere(split["train"])
    val_pairs = np.argwhere(split["validation"])
    if len(train_pairs) == 0:
        raise ModelError(f"{model_id}: no training samples with {window} valid feature weeks")

    x_train = _gather(tensor, train_pairs, window, with_macro)
    y_train = tensor.target[train_pairs[:, 0], train_pairs[:, 1]]
    if len(val_pairs):
        x_val = _gather(tensor, val_pairs, window, with_macro)
        y_val = tensor.target[val_pairs[:, 0], val_pairs[:, 1]]
    else:
        logger.warning("%s: no validation samples; early stopping on training MSE", model_id)
        x_val, y_val = x_train, y_train

    store = init_lstm_params(rng_for(seed, "init", model_id), x_train.shape[2], hidden, layers)
    order_rng = rng_for(seed, "minibatch", model_id)
    drop_rng = rng_for(seed, "dropout", model_id)

    def epoch(store: ParamStore, _: int):
        order = order_rng.permutation(len(x_train))
        losses = []
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            xb, yb = x_train[idx], y_train[idx][:, None]

            def closure(s: ParamStore, tape: Optional[Tape]) -> Var:
                pred = lstm_head(s, xb, layers, dropout_rate, train=True, rng=drop_rng, tape=tape)
                return masked_mse(pred, yb, None, tape)

            losses.append(backprop(closure, store))
            store = adam_step(store, lr)
        return store, float(np.mean(losses))

    def validate(s: ParamStore) -> float:
        diff = _predict(s, x_val, layers) - y_val
        return float(diff @ diff / len(diff))

    describe = f"{model_id} (layers={layers}, hidden={hidden}, dropout={dropout_rate}, lr={lr}, seed={seed})"
    best, val_mse, epochs = run_epochs(store, epoch, validate, max_epochs, patience, describe)
    logger.info("Trained %s: %d epochs on %d samples, validation MSE %.6f", describe, epochs, len(x_train), val_mse)
    return LstmModel(
        model_id=model_id,
        store=best,
        layers=layers,
        hidden=hidden,
        dropout=dropout_rate,
        window=window,
        seed=seed,
        with_macro=with_macro,
        validation_mse=val_mse,
        epochs_run=epochs,
    )


def predict_lstm(model: LstmModel, tensor: FeatureTensor) -> ForecastMatrix:
    """Predictions for every stock-week with a full feature window; others are masked."""
    valid, _ = stock_windows(tensor, model.window)
    mask = valid & tensor.mask
    pairs = np.argwhere(mask)
    values = np.zeros((tensor.n_weeks, tensor.n_stocks))
    if len(pairs):
        values[pairs[:, 0], pairs[:, 1]] = _predict(model.store, _gather(tensor, pairs, model.window, model.with_macro), model.layers)
    return ForecastMatrix(
        model_id=model.model_id,
        weeks=tensor.weeks,
        target_weeks=tensor.target_weeks,
        tickers=list(tensor.tickers),
        values=np.maximum(values, 0.0),
        mask=mask,
    )
