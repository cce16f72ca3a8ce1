from __future__ import annotations

import logging
from typing import Dict, Mapping, Optional, Union

import numpy as np
import pandas as pd

from errors import GraphError, ModelError
from models import FeatureTensor, ForecastMatrix, MarketGraph, SageModel
from neural import (
    ParamStore,
    Tape,
    Var,
    adam_step,
    aggregate,
    backprop,
    concat,
    const,
    dense_forward,
    dropout,
    glorot,
    masked_mse,
    relu,
    rng_for,
    run_epochs,
)

logger = logging.getLogger(__name__)

GraphLike = Union[MarketGraph, np.ndarray]


def init_sage_params(rng: np.random.Generator, input_width: int, hidden: int, layers: int) -> ParamStore:
    if layers < 1:
        raise ModelError(f"GraphSAGE needs at least one layer, got {layers}")
    params: Dict[str, np.ndarray] = {}
    width = input_width
    for layer in range(layers):
        out = hidden if layer < layers - 1 else 1
        params[f"sage{layer}.W"] = glorot(rng, 2 * width, out)
        params[f"sage{layer}.b"] = np.zeros(out)
        width = out
    return ParamStore(params)


def _operator(graph: GraphLike, n_nodes: int) -> np.ndarray:
    if isinstance(graph, MarketGraph):
        if graph.node_count != n_nodes:
            raise GraphError(f"node mismatch: graph has {graph.node_count} nodes, features have {n_nodes} rows")
        return graph.aggregation_matrix()
    if graph.shape != (n_nodes, n_nodes):
        raise GraphError(f"node mismatch: operator {graph.shape} for {n_nodes} feature rows")
    return graph


def sage_layer(
    h: Var,
    graph: GraphLike,
    W: Var,
    b: Var,
    activation: str = "relu",
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    tape: Optional[Tape] = None,
) -> Var:
    """
    activation(dense([H_i | mean of H_j over neighbors j of i])).

    Directed graphs aggregate over in-neighbors; isolated nodes see a zero
    neighbor mean. Dropout follows hidden activations in train mode.
    """
    op = _operator(graph, h.shape[0])
    m = aggregate(op, h, tape)
    z = dense_forward(concat(h, m, tape), W, b, tape)
    if activation == "identity":
        return z
    if activation != "relu":
        raise ModelError(f"unknown activation '{activation}'")
    return dropout(relu(z, tape), dropout_rate, train, rng, tape)


def sage_forward(
    store: ParamStore,
    x: np.ndarray,
    graph: GraphLike,
    layers: int,
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    tape: Optional[Tape] = None,
) -> Var:
    """N x 1 output: `layers - 1` hidden relu layers, then a linear SAGE head."""
    op = _operator(graph, x.shape[0])
    h = const(x)
    for layer in range(layers):
        last = layer == layers - 1
        h = sage_layer(
            h,
            op,
            store.var(f"sage{layer}.W"),
            store.var(f"sage{layer}.b"),
            activation="identity" if last else "relu",
            dropout_rate=0.0 if last else dropout_rate,
            train=train,
            rng=rng,
            tape=tape,
        )
    return h


class _WeekOperators:
    """Aggregation matrices per week, computed once per distinct graph object."""

    def __init__(self, graphs: Mapping[pd.Timestamp, MarketGraph], tickers) -> None:
        self.graphs = graphs
        self.tickers = tuple(tickers)
        self._by_graph: Dict[int, np.ndarray] = {}

    def __call__(self, week: pd.Timestamp) -> np.ndarray:
        graph = self.graphs.get(week)
        if graph is None:
            raise ModelError(f"no graph for week {pd.Timestamp(week).date()}")
        if graph.tickers != self.tickers:
            raise GraphError(f"node mismatch: graph for {pd.Timestamp(week).date()} has a different ticker order")
        key = id(graph)
        if key not in self._by_graph:
            self._by_graph[key] = graph.aggregation_matrix()
        return self._by_graph[key]


def _pooled_mse(model_store: ParamStore, tensor: FeatureTensor, ops: _WeekOperators, week_idx, layers, with_macro) -> float:
    sse, count = 0.0, 0
    for w in week_idx:
        mask = tensor.mask[w]
        pred = sage_forward(model_store, tensor.node_inputs(w, with_macro), ops(tensor.weeks[w]), layers).value[:, 0]
        diff = (pred - tensor.target[w])[mask]
        sse += float(diff @ diff)
        count += int(mask.sum())
    return sse / count if count else float("nan")


def train_sage(
    tensor: FeatureTensor,
    graphs: Mapping[pd.Timestamp, MarketGraph],
    *,
    family: str,
    with_macro: bool,
    hidden: int = 64,
    layers: int = 2,
    dropout_rate: float = 0.3,
    lr: float = 1e-3,
    max_epochs: int = 200,
    patience: int = 20,
    seed: int = 0,
    model_id: Optional[str] = None,
) -> SageModel:
    """
    Fit on training weeks, one graph-week per optimizer step, keeping the
    parameters with the lowest validation MSE.
    """
    model_id = model_id or f"sage_{family}{'+macro' if with_macro else ''}"
    ops = _WeekOperators(graphs, tensor.tickers)
    train_idx = [w for w in tensor.week_indices("train") if tensor.mask[w].any()]
    val_idx = [w for w in tensor.week_indices("validation") if tensor.mask[w].any()]
    if not train_idx:
        raise ModelError(f"{model_id}: no training weeks with targets")
    for w in train_idx + val_idx:
        ops(tensor.weeks[w])
    directed = any(graphs[tensor.weeks[w]].directed for w in train_idx)

    input_width = tensor.node_inputs(train_idx[0], with_macro).shape[1]
    store = init_sage_params(rng_for(seed, "init", model_id), input_width, hidden, layers)
    order_rng = rng_for(seed, "minibatch", model_id)
    drop_rng = rng_for(seed, "dropout", model_id)

    def epoch(store: ParamStore, _: int):
        losses = []
        for w in order_rng.permutation(train_idx):
            x, op = tensor.node_inputs(w, with_macro), ops(tensor.weeks[w])

            def closure(s: ParamStore, tape: Optional[Tape]) -> Var:
                pred = sage_forward(s, x, op, layers, dropout_rate, train=True, rng=drop_rng, tape=tape)
                return masked_mse(pred, tensor.target[w][:, None], tensor.mask[w][:, None], tape)

            losses.append(backprop(closure, store))
            store = adam_step(store, lr)
        return store, float(np.mean(losses))

    if val_idx:
        def validate(s: ParamStore) -> float:
            return _pooled_mse(s, tensor, ops, val_idx, layers, with_macro)
    else:
        logger.warning("%s: no validation weeks; early stopping on training MSE", model_id)

        def validate(s: ParamStore) -> float:
            return _pooled_mse(s, tensor, ops, train_idx, layers, with_macro)

    describe = (
        f"{model_id} (layers={layers}, hidden={hidden}, dropout={dropout_rate}, lr={lr}, seed={seed})"
    )
    best, val_mse, epochs = run_epochs(store, epoch, validate, max_epochs, patience, describe)
    logger.info("Trained %s: %d epochs, validation MSE %.6f", describe, epochs, val_mse)
    return SageModel(
        model_id=model_id,
        store=best,
        layers=layers,
        hidden=hidden,
        dropout=dropout_rate,
        family=family,
        with_macro=with_macro,
        directed=directed,
        input_width=input_width,
        seed=seed,
        validation_mse=val_mse,
        epochs_run=epochs,
    )


def predict_sage(model: SageModel, tensor: FeatureTensor, graphs: Mapping[pd.Timestamp, MarketGraph]) -> ForecastMatrix:
    """Eval-mode forward pass per week over that week's graph, clamped at 0."""
    ops = _WeekOperators(graphs, tensor.tickers)
    values = np.zeros((tensor.n_weeks, tensor.n_stocks))
    for w in range(tensor.n_weeks):
        x = tensor.node_inputs(w, model.with_macro)
        if x.shape[1] != model.input_width:
            raise ModelError(f"{model.model_id}: input width {x.shape[1]}, model expects {model.input_width}")
        values[w] = sage_forward(model.store, x, ops(tensor.weeks[w]), model.layers).value[:, 0]
    return ForecastMatrix(
        model_id=model.model_id,
        weeks=tensor.weeks,
        target_weeks=tensor.target_weeks,
        tickers=list(tensor.tickers),
        values=np.maximum(values, 0.0),
        mask=tensor.mask.copy(),
    )
