"""
Small reverse-mode engine for the dense, recurrent and graph layers.

Every op takes Vars and an optional Tape. With a tape the op records a
closure that pushes the output gradient back to its inputs; `Tape.backward`
replays those closures newest first, once. Without a tape the op is a plain
numpy forward pass.

Parameter Vars share their gradient buffers with the ParamStore, so a
backward pass fills `store.grads` in place.
"""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from errors import ModelError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float]


def rng_for(seed: int, *names: object) -> np.random.Generator:
    """Independent generator for a named substream of the run seed."""
    entropy = [int(seed)] + [zlib.crc32(str(n).encode("utf-8")) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))


class Var:
    __slots__ = ("value", "grad")

    def __init__(self, value: ArrayLike, grad: Optional[np.ndarray] = None) -> None:
        self.value = np.asarray(value, dtype=float)
        self.grad = grad

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def requires_grad(self) -> bool:
        return self.grad is not None


def const(value: ArrayLike) -> Var:
    return Var(value)


class Tape:
    def __init__(self) -> None:
        self._steps: List[Callable[[], None]] = []
        self._done = False

    def __len__(self) -> int:
        return len(self._steps)

    def output(self, value: np.ndarray, *inputs: Var) -> Var:
        """Output Var of a recorded op; it carries a gradient only if an input does."""
        if any(v.requires_grad for v in inputs):
            return Var(value, np.zeros_like(value))
        return Var(value)

    def record(self, step: Callable[[], None]) -> None:
        if self._done:
            raise ModelError("tape already replayed; record a fresh forward pass")
        self._steps.append(step)

    def backward(self, loss: Var) -> None:
        if self._done:
            raise ModelError("tape already replayed")
        if loss.value.size != 1:
            raise ModelError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.grad is None:
            raise ModelError("loss does not depend on any parameter")
        loss.grad += 1.0
        for step in reversed(self._steps):
            step()
        self._done = True
        self._steps.clear()


def _accumulate(v: Var, g: np.ndarray) -> None:
    if v.grad is not None:
        v.grad += g


def _unary(
    tape: Optional[Tape], x: Var, value: np.ndarray, local: Callable[[np.ndarray], np.ndarray]
) -> Var:
    if tape is None:
        return Var(value)
    out = tape.output(value, x)
    if out.requires_grad:
        tape.record(lambda: _accumulate(x, local(out.grad)))
    return out


def matmul(a: Var, b: Var, tape: Optional[Tape] = None) -> Var:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ModelError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    value = a.value @ b.value
    if tape is None:
        return Var(value)
    out = tape.output(value, a, b)
    if out.requires_grad:
        def step() -> None:
            _accumulate(a, out.grad @ b.value.T)
            _accumulate(b, a.value.T @ out.grad)
        tape.record(step)
    return out


def add_bias(x: Var, b: Var, tape: Optional[Tape] = None) -> Var:
    if b.value.ndim != 1 or x.value.ndim != 2 or x.shape[1] != b.shape[0]:
        raise ModelError(f"bias shape {b.shape} does not fit input {x.shape}")
    value = x.value + b.value
    if tape is None:
        return Var(value)
    out = tape.output(value, x, b)
    if out.requires_grad:
        def step() -> None:
            _accumulate(x, out.grad)
            _accumulate(b, out.grad.sum(axis=0))
        tape.record(step)
    return out


def add(a: Var, b: Var, tape: Optional[Tape] = None) -> Var:
    if a.shape != b.shape:
        raise ModelError(f"add shape mismatch: {a.shape} + {b.shape}")
    value = a.value + b.value
    if tape is None:
        return Var(value)
    out = tape.output(value, a, b)
    if out.requires_grad:
        def step() -> None:
            _accumulate(a, out.grad)
            _accumulate(b, out.grad)
        tape.record(step)
    return out


def mul(a: Var, b: Var, tape: Optional[Tape] = None) -> Var:
    """Elementwise product."""
    if a.shape != b.shape:
        raise ModelError(f"mul shape mismatch: {a.shape} * {b.shape}")
    value = a.value * b.value
    if tape is None:
        return Var(value)
    out = tape.output(value, a, b)
    if out.requires_grad:
        def step() -> None:
            _accumulate(a, out.grad * b.value)
            _accumulate(b, out.grad * a.value)
        tape.record(step)
    return out


def concat(a: Var, b: Var, tape: Optional[Tape] = None) -> Var:
    """Column-wise [a | b]."""
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ModelError(f"concat row mismatch: {a.shape} | {b.shape}")
    split = a.shape[1]
    value = np.concatenate([a.value, b.value], axis=1)
    if tape is None:
        return Var(value)
    out = tape.output(value, a, b)
    if out.requires_grad:
        def step() -> None:
            _accumulate(a, out.grad[:, :split])
            _accumulate(b, out.grad[:, split:])
        tape.record(step)
    return out


def slice_cols(x: Var, start: int, stop: int, tape: Optional[Tape] = None) -> Var:
    value = x.value[:, start:stop]
    if tape is None:
        return Var(value)
    out = tape.output(value, x)
    if out.requires_grad:
        def step() -> None:
            if x.grad is not None:
                x.grad[:, start:stop] += out.grad
        tape.record(step)
    return out


def aggregate(weights: np.ndarray, x: Var, tape: Optional[Tape] = None) -> Var:
    """Constant left-multiplication, e.g. a row-normalized neighbor-mean operator."""
    if weights.shape[1] != x.shape[0]:
        raise ModelError(f"aggregation operator {weights.shape} does not fit {x.shape[0]} nodes")
    return _unary(tape, x, weights @ x.value, lambda g: weights.T @ g)


def relu(x: Var, tape: Optional[Tape] = None) -> Var:
    on = x.value > 0
    return _unary(tape, x, np.where(on, x.value, 0.0), lambda g: g * on)


def sigmoid(x: Var, tape: Optional[Tape] = None) -> Var:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _unary(tape, x, s, lambda g: g * s * (1.0 - s))


def tanh(x: Var, tape: Optional[Tape] = None) -> Var:
    t = np.tanh(x.value)
    return _unary(tape, x, t, lambda g: g * (1.0 - t * t))


def dropout(
    x: Var,
    rate: float,
    train: bool,
    rng: Optional[np.random.Generator] = None,
    tape: Optional[Tape] = None,
) -> Var:
    """Inverted dropout: survivors scaled by 1/(1 - rate). Identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ModelError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ModelError("train-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _unary(tape, x, x.value * keep, lambda g: g * keep)


def dense_forward(x: Var, W: Var, b: Var, tape: Optional[Tape] = None) -> Var:
    """xW + b."""
    if x.value.ndim != 2 or W.value.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ModelError(f"dense shape mismatch: input {x.shape}, weights {W.shape}")
    if b.shape != (W.shape[1],):
        raise ModelError(f"dense shape mismatch: weights {W.shape}, bias {b.shape}")
    return add_bias(matmul(x, W, tape), b, tape)


def mse_loss(pred: np.ndarray, target: np.ndarray, mask: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """
    Mean of (pred - target)^2 over unmasked entries, and its gradient
    2 (pred - target) / m (zero on masked entries).
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ModelError(f"prediction {pred.shape} and target {target.shape} differ in shape")
    mask = np.ones(pred.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    m = int(mask.sum())
    if m == 0:
        raise ModelError("loss over zero unmasked entries")
    diff = np.where(mask, pred - target, 0.0)
    return float((diff * diff).sum() / m), 2.0 * diff / m


def masked_mse(pred: Var, target: np.ndarray, mask: Optional[np.ndarray] = None, tape: Optional[Tape] = None) -> Var:
    loss, grad = mse_loss(pred.value, target, mask)
    return _unary(tape, pred, np.array(loss), lambda g: g * grad)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class ParamStore:
    """Named parameters, their gradient buffers and Adam moments."""
    params: Dict[str, np.ndarray]
    grads: Dict[str, np.ndarray] = field(default_factory=dict)
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self) -> None:
        self.params = {k: np.asarray(v, dtype=float) for k, v in self.params.items()}
        for name, value in self.params.items():
            self.grads.setdefault(name, np.zeros_like(value))
            self.first_moment.setdefault(name, np.zeros_like(value))
            self.second_moment.setdefault(name, np.zeros_like(value))
            for buf in (self.grads, self.first_moment, self.second_moment):
                if buf[name].shape != value.shape:
                    raise ModelError(f"state for '{name}' has shape {buf[name].shape}, parameter {value.shape}")

    def names(self) -> List[str]:
        return sorted(self.params)

    def var(self, name: str) -> Var:
        return Var(self.params[name], self.grads[name])

    def vars(self) -> Dict[str, Var]:
        return {name: self.var(name) for name in self.params}

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> "ParamStore":
        return ParamStore(
            params={k: v.copy() for k, v in self.params.items()},
            grads={k: v.copy() for k, v in self.grads.items()},
            first_moment={k: v.copy() for k, v in self.first_moment.items()},
            second_moment={k: v.copy() for k, v in self.second_moment.items()},
            step=self.step,
        )

    def size(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def adam_step(
    store: ParamStore,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> ParamStore:
    """Bias-corrected Adam update; returns a new store with cleared gradients."""
    for name in store.names():
        if not np.all(np.isfinite(store.grads[name])):
            raise ModelError(f"non-finite gradient in parameter '{name}'")
    b1, b2 = betas
    t = store.step + 1
    params, grads, m_new, v_new = {}, {}, {}, {}
    for name in store.names():
        g = store.grads[name]
        m = b1 * store.first_moment[name] + (1.0 - b1) * g
        v = b2 * store.second_moment[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        params[name] = store.params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
        grads[name] = np.zeros_like(g)
        m_new[name], v_new[name] = m, v
    return ParamStore(params=params, grads=grads, first_moment=m_new, second_moment=v_new, step=t)


LossClosure = Callable[[ParamStore, Optional[Tape]], Var]


def backprop(closure: LossClosure, store: ParamStore) -> float:
    """Zero the store's gradients, run one taped forward pass and fill them."""
    store.zero_grad()
    tape = Tape()
    loss = closure(store, tape)
    value = float(loss.value)
    if not np.isfinite(value):
        raise ModelError(f"loss is {value}")
    tape.backward(loss)
    return value


def gradient_check(
    closure: LossClosure,
    store: ParamStore,
    seed: int,
    n_coords: int = 50,
    step: float = 1e-5,
    floor: float = 1e-6,
) -> float:
    """
    Max relative error between reverse-mode and central-difference gradients
    over a random sample of at least `n_coords` parameter coordinates (all of
    them when the model is smaller).

    The closure must be deterministic: seed its dropout inside or disable it.
    """
    backprop(closure, store)
    analytic = {k: v.copy() for k, v in store.grads.items()}

    coords = [(name, k) for name in store.names() for k in range(store.params[name].size)]
    rng = rng_for(seed, "gradient_check")
    if len(coords) > n_coords:
        picks = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in sorted(picks)]

    worst = 0.0
    for name, k in coords:
        flat = store.params[name].reshape(-1)
        original = flat[k]
        flat[k] = original + step
        up = float(closure(store, None).value)
        flat[k] = original - step
        down = float(closure(store, None).value)
        flat[k] = original
        numeric = (up - down) / (2.0 * step)
        exact = analytic[name].reshape(-1)[k]
        rel = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
        worst = max(worst, rel)
    logger.debug("gradient check over %d coordinates: max relative error %.3g", len(coords), worst)
    return worst


def save_checkpoint(store: ParamStore, path: str | Path, seed: int, meta: Optional[dict] = None) -> None:
    """npz of parameters and optimizer moments; the JSON header carries shapes, step and seed."""
    header = {
        "seed": int(seed),
        "step": store.step,
        "shapes": {name: list(store.params[name].shape) for name in store.names()},
        "meta": meta or {},
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True))}
    for name in store.names():
        arrays[f"param::{name}"] = store.params[name]
        arrays[f"m::{name}"] = store.first_moment[name]
        arrays[f"v::{name}"] = store.second_moment[name]
    np.savez(path, **arrays)


def load_checkpoint(path: str | Path) -> Tuple[ParamStore, dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        params, m, v = {}, {}, {}
        for name, shape in header["shapes"].items():
            params[name] = data[f"param::{name}"]
            if list(params[name].shape) != shape:
                raise ModelError(f"checkpoint {path}: '{name}' has shape {params[name].shape}, header says {shape}")
            m[name] = data[f"m::{name}"]
            v[name] = data[f"v::{name}"]
    store = ParamStore(params=params, first_moment=m, second_moment=v, step=int(header["step"]))
    return store, header


EpochFn = Callable[[ParamStore, int], Tuple[ParamStore, float]]


def run_epochs(
    store: ParamStore,
    epoch_fn: EpochFn,
    validate: Callable[[ParamStore], float],
    max_epochs: int,
    patience: int,
    describe: str,
) -> Tuple[ParamStore, float, int]:
    """
    Train until `max_epochs` or until validation MSE has not improved for
    `patience` epochs. Returns the best store, its validation MSE and the
    number of epochs run. Zero epochs returns the initial parameters.
    """
    best_store = store.copy()
    best = validate(store)
    if not np.isfinite(best):
        raise ModelError(f"initial validation loss is {best} for {describe}")
    stale = 0
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        try:
            store, train_loss = epoch_fn(store, epoch)
        except ModelError as exc:
            raise ModelError(f"training diverged at epoch {epoch} for {describe}: {exc}") from exc
        if not np.isfinite(train_loss):
            raise ModelError(f"training diverged at epoch {epoch} (loss {train_loss}) for {describe}")
        val = validate(store)
        if not np.isfinite(val):
            raise ModelError(f"training diverged at epoch {epoch} (validation loss {val}) for {describe}")
        if val < best:
            best, best_store, stale = val, store.copy(), 0
        else:
            stale += 1
        if epoch % 10 == 0:
            logger.debug("%s epoch %d: train %.6f, validation %.6f", describe, epoch, train_loss, val)
        if stale >= patience:
            logger.debug("%s: early stop at epoch %d (best validation %.6f)", describe, epoch, best)
            break
    return best_store, best, epoch
