"""From-scratch LSTM / bidirectional LSTM regression with BPTT and Adam.

Cell equations (gate order i, f, g, o along the stacked weight axis)::

    z   = x_t @ w_x + h_prev @ w_h + bias          # (B, 4H)
    i   = sigmoid(z_i);  f = sigmoid(z_f)
    g   = tanh(z_g);     o = sigmoid(z_o)
    c_t = f * c_prev + i * g
    h_t = o * tanh(c_t)

A linear head maps the final hidden state (vanilla) or the concatenation of
both directions' final hidden states (bidirectional) to the RUL estimate. The
head is evaluated as a sum of per-direction dot products, so a bidirectional
model whose backward half is zeroed reproduces the vanilla prediction
bit-for-bit.

Gradients are exact backpropagation through time for the mean-squared-error
loss, accumulated over the full unrolled sequence and both directions. The
hot forward/backward kernels live at the bottom of the module and run under
numba unless HDDRUL_DISABLE_JIT is set.
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._jit import njit
from .errors import ConfigError, DataError, DivergenceError, NumericError
from .preprocess import WindowedDataset
from .seeding import rng_for


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class LstmCellParams:
    """Stacked gate parameters: w_x (F, 4H), w_h (H, 4H), bias (4H,)."""

    w_x: np.ndarray
    w_h: np.ndarray
    bias: np.ndarray

    @property
    def input_size(self) -> int:
        return self.w_x.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmCellParams":
        return cls(
            w_x=np.zeros((input_size, 4 * hidden_size)),
            w_h=np.zeros((hidden_size, 4 * hidden_size)),
            bias=np.zeros(4 * hidden_size),
        )


@dataclass
class DenseParams:
    """Linear head: one weight per (direction-concatenated) hidden unit."""

    weights: np.ndarray  # (H,) or (2H,)
    bias: np.ndarray  # (1,)


@dataclass
class TrainSettings:
    bidirectional: bool = True
    hidden_size: int = 32
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    grad_clip: float | None = 5.0


@dataclass
class BiLstmModel:
    forward_cell: LstmCellParams
    backward_cell: LstmCellParams | None
    dense: DenseParams
    bidirectional: bool
    timesteps: int
    feature_ids: list[int]
    settings: TrainSettings

    @property
    def hidden_size(self) -> int:
        return self.forward_cell.hidden_size

    @property
    def n_features(self) -> int:
        return self.forward_cell.input_size

    def predict(
        self, windows: np.ndarray, clip: tuple[float, float] | None = None
    ) -> np.ndarray:
        """RUL estimates for a (n, timesteps, features) block.

        Estimates are raw regression outputs; pass ``clip=(lo, hi)`` to clamp
        them.
        """
        X = np.ascontiguousarray(np.asarray(windows, dtype=np.float64))
        if X.ndim != 3 or X.shape[2] != self.n_features:
            raise ConfigError(
                f"windows shaped {X.shape} do not match a {self.n_features}-feature model"
            )
        if not np.all(np.isfinite(X)):
            raise NumericError("non-finite values in prediction input")
        preds = _predict_batch(self, X)
        if clip is not None:
            preds = np.clip(preds, clip[0], clip[1])
        return preds


@dataclass
class TrainTrace:
    losses: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    snapshot_id: str = ""


# ---------------------------------------------------------------------------
# Reference forward passes (single window; mirror the batched kernels)


def lstm_cell_forward(params: LstmCellParams, x_t, h_prev, c_prev):
    """One cell step; returns (h_t, c_t, gate cache for backprop)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    if not (np.all(np.isfinite(x_t)) and np.all(np.isfinite(h_prev)) and np.all(np.isfinite(c_prev))):
        raise NumericError("non-finite input to the cell")
    hidden = params.hidden_size
    z = x_t @ params.w_x + h_prev @ params.w_h + params.bias
    i = _sigmoid(z[..., :hidden])
    f = _sigmoid(z[..., hidden : 2 * hidden])
    g = np.tanh(z[..., 2 * hidden : 3 * hidden])
    o = _sigmoid(z[..., 3 * hidden :])
    c_t = f * c_prev + i * g
    tanh_c = np.tanh(c_t)
    h_t = o * tanh_c
    cache = {"i": i, "f": f, "g": g, "o": o, "c_prev": c_prev, "tanh_c": tanh_c, "x": x_t, "h_prev": h_prev}
    return h_t, c_t, cache


def lstm_forward(params: LstmCellParams, window: np.ndarray) -> np.ndarray:
    """Run the cell left to right from zero state; returns the last hidden state."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ValueError("window must be (timesteps, features)")
    h = np.zeros(params.hidden_size)
    c = np.zeros(params.hidden_size)
    for t in range(window.shape[0]):
        h, c, _ = lstm_cell_forward(params, window[t], h, c)
    return h


def bilstm_forward(model: BiLstmModel, window: np.ndarray) -> float:
    """Prediction for one window; delegates to the batched path."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ConfigError("window must be (timesteps, features)")
    return float(model.predict(window[None, :, :])[0])


def mse_loss(predictions, targets) -> float:
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or predictions.size == 0:
        raise ValueError("predictions and targets must be equal-length and non-empty")
    return float(np.mean((predictions - targets) ** 2))


# ---------------------------------------------------------------------------
# Initialization


def _glorot_stack(rng: np.random.Generator, fan_in: int, hidden: int) -> np.ndarray:
    """Four (fan_in, hidden) gate blocks drawn in i, f, g, o order."""
    limit = math.sqrt(6.0 / (fan_in + hidden))
    w = np.empty((fan_in, 4 * hidden))
    for k in range(4):
        w[:, k * hidden : (k + 1) * hidden] = rng.uniform(-limit, limit, size=(fan_in, hidden))
    return w


def _init_cell(rng: np.random.Generator, n_features: int, hidden: int) -> LstmCellParams:
    w_x = _glorot_stack(rng, n_features, hidden)
    w_h = _glorot_stack(rng, hidden, hidden)
    bias = np.zeros(4 * hidden)
    bias[hidden : 2 * hidden] = 1.0  # forget-gate bias starts open
    return LstmCellParams(w_x=w_x, w_h=w_h, bias=bias)


def init_model(
    settings: TrainSettings,
    n_features: int,
    timesteps: int,
    feature_ids: Sequence[int] | None = None,
) -> BiLstmModel:
    forward_cell = _init_cell(rng_for(settings.seed, "init/forward"), n_features, settings.hidden_size)
    backward_cell = None
    if settings.bidirectional:
        backward_cell = _init_cell(rng_for(settings.seed, "init/backward"), n_features, settings.hidden_size)
    concat = settings.hidden_size * (2 if settings.bidirectional else 1)
    rng = rng_for(settings.seed, "init/dense")
    limit = math.sqrt(6.0 / (concat + 1))
    dense = DenseParams(weights=rng.uniform(-limit, limit, size=concat), bias=np.zeros(1))
    return BiLstmModel(
        forward_cell=forward_cell,
        backward_cell=backward_cell,
        dense=dense,
        bidirectional=settings.bidirectional,
        timesteps=timesteps,
        feature_ids=list(feature_ids) if feature_ids is not None else list(range(n_features)),
        settings=settings,
    )


def parameter_arrays(model: BiLstmModel) -> tuple[list[str], list[np.ndarray]]:
    """Named live views of every trainable array, in serialization order."""
    names = ["forward.w_x", "forward.w_h", "forward.bias"]
    arrays = [model.forward_cell.w_x, model.forward_cell.w_h, model.forward_cell.bias]
    if model.bidirectional:
        names += ["backward.w_x", "backward.w_h", "backward.bias"]
        arrays += [model.backward_cell.w_x, model.backward_cell.w_h, model.backward_cell.bias]
    names += ["dense.weights", "dense.bias"]
    arrays += [model.dense.weights, model.dense.bias]
    return names, arrays


# ---------------------------------------------------------------------------
# Gradients


@dataclass
class Gradients:
    names: list[str]
    arrays: list[np.ndarray]

    def by_name(self, name: str) -> np.ndarray:
        return self.arrays[self.names.index(name)]

    def global_norm(self) -> float:
        return math.sqrt(sum(float((a * a).sum()) for a in self.arrays))

    def clip_global_norm(self, max_norm: float) -> None:
        norm = self.global_norm()
        if norm > max_norm:
            scale = max_norm / norm
            for a in self.arrays:
                a *= scale


def _direction_states(cell: LstmCellParams, X_tbf: np.ndarray):
    return _lstm_forward_tbf(X_tbf, cell.w_x, cell.w_h, cell.bias)


def _predict_batch(model: BiLstmModel, X: np.ndarray) -> np.ndarray:
    hidden = model.hidden_size
    X_tbf = np.ascontiguousarray(X.transpose(1, 0, 2))
    h_seq, _, _, _ = _direction_states(model.forward_cell, X_tbf)
    preds = h_seq[-1] @ model.dense.weights[:hidden]
    if model.bidirectional:
        h_seq_b, _, _, _ = _direction_states(model.backward_cell, np.ascontiguousarray(X_tbf[::-1]))
        preds = preds + h_seq_b[-1] @ model.dense.weights[hidden:]
    return preds + model.dense.bias[0]


def _loss_and_gradients(model: BiLstmModel, windows: np.ndarray, targets: np.ndarray):
    X = np.ascontiguousarray(np.asarray(windows, dtype=np.float64))
    y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("batch must be non-empty (n, timesteps, features) with aligned targets")
    if X.shape[2] != model.n_features:
        raise ConfigError("batch feature count does not match the model")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite values in training batch")
    n = X.shape[0]
    hidden = model.hidden_size

    X_tbf = np.ascontiguousarray(X.transpose(1, 0, 2))
    fwd = _direction_states(model.forward_cell, X_tbf)
    h_last_f = fwd[0][-1]
    preds = h_last_f @ model.dense.weights[:hidden]
    if model.bidirectional:
        X_rev = np.ascontiguousarray(X_tbf[::-1])
        bwd = _direction_states(model.backward_cell, X_rev)
        h_last_b = bwd[0][-1]
        preds = preds + h_last_b @ model.dense.weights[hidden:]
    preds = preds + model.dense.bias[0]

    dy = 2.0 * (preds - y) / n
    d_dense_b = np.array([dy.sum()])
    names = ["forward.w_x", "forward.w_h", "forward.bias"]
    dh_last_f = np.ascontiguousarray(np.outer(dy, model.dense.weights[:hidden]))
    arrays = list(
        _lstm_backward_tbf(X_tbf, model.forward_cell.w_x, model.forward_cell.w_h, *fwd, dh_last_f)
    )
    if model.bidirectional:
        dh_last_b = np.ascontiguousarray(np.outer(dy, model.dense.weights[hidden:]))
        names += ["backward.w_x", "backward.w_h", "backward.bias"]
        arrays += list(
            _lstm_backward_tbf(X_rev, model.backward_cell.w_x, model.backward_cell.w_h, *bwd, dh_last_b)
        )
        d_dense_w = np.concatenate([h_last_f.T @ dy, h_last_b.T @ dy])
    else:
        d_dense_w = h_last_f.T @ dy
    names += ["dense.weights", "dense.bias"]
    arrays += [d_dense_w, d_dense_b]

    for name, arr in zip(names, arrays):
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite gradient in {name}")
    return Gradients(names=names, arrays=arrays), preds


def backward(model: BiLstmModel, windows: np.ndarray, targets: np.ndarray) -> Gradients:
    """Exact gradient of the MSE loss through the full unrolled network."""
    grads, _ = _loss_and_gradients(model, windows, targets)
    return grads


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], learning_rate: float = 1e-3) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
        )


def adam_step(
    state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]
) -> tuple[Sequence[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to the parameters in place."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ValueError("params, grads and optimizer state are misaligned")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.t
    correction2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# Training loop


def train(settings: TrainSettings, dataset: WindowedDataset) -> tuple[BiLstmModel, TrainTrace]:
    """Seeded init, per-epoch shuffles, mini-batch Adam on the MSE loss.

    Identical settings + seed + data give bit-identical models and traces. A
    non-finite loss aborts with :class:`DivergenceError` carrying the trace
    gathered so far.
    """
    n = dataset.n_samples
    if n == 0:
        raise ValueError("training dataset is empty")
    model = init_model(
        settings,
        n_features=dataset.n_features,
        timesteps=dataset.timesteps,
        feature_ids=dataset.feature_ids,
    )
    _, params = parameter_arrays(model)
    state = AdamState.for_params(params, learning_rate=settings.learning_rate)
    X = np.ascontiguousarray(dataset.windows, dtype=np.float64)
    y = np.asarray(dataset.targets, dtype=np.float64)

    trace = TrainTrace()
    for epoch in range(settings.epochs):
        started = time.perf_counter()
        perm = rng_for(settings.seed, f"shuffle/epoch-{epoch}").permutation(n)
        sse = 0.0
        for lo in range(0, n, settings.batch_size):
            sel = perm[lo : lo + settings.batch_size]
            try:
                grads, preds = _loss_and_gradients(model, X[sel], y[sel])
            except NumericError as exc:
                trace.snapshot_id = model_fingerprint(model)
                raise DivergenceError(f"epoch {epoch}: {exc}", trace=trace) from exc
            batch_loss = float(np.mean((preds - y[sel]) ** 2))
            if not math.isfinite(batch_loss):
                trace.snapshot_id = model_fingerprint(model)
                raise DivergenceError(
                    f"non-finite loss in epoch {epoch}", trace=trace
                )
            sse += batch_loss * len(sel)
            if settings.grad_clip:
                grads.clip_global_norm(settings.grad_clip)
            adam_step(state, params, grads.arrays)
        trace.losses.append(sse / n)
        trace.seconds.append(time.perf_counter() - started)
    trace.snapshot_id = model_fingerprint(model)
    return model, trace


# ---------------------------------------------------------------------------
# Model files (versioned text; %.17g round-trips float64 exactly)

_FORMAT = "hddrul-model 1"


def serialize_model(model: BiLstmModel) -> str:
    s = model.settings
    lines = [
        _FORMAT,
        f"mode {'bidirectional' if model.bidirectional else 'vanilla'}",
        f"hidden_size {model.hidden_size}",
        f"n_features {model.n_features}",
        f"timesteps {model.timesteps}",
        f"epochs {s.epochs}",
        f"batch_size {s.batch_size}",
        "learning_rate %.17g" % s.learning_rate,
        f"seed {s.seed}",
        "grad_clip " + ("none" if s.grad_clip is None else "%.17g" % s.grad_clip),
        "feature_ids " + " ".join(str(f) for f in model.feature_ids),
    ]
    names, arrays = parameter_arrays(model)
    for name, arr in zip(names, arrays):
        mat = np.atleast_2d(arr)
        lines.append(f"param {name} {mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join("%.17g" % v for v in row))
    lines.append("end")
    return "\n".join(lines) + "\n"


def model_fingerprint(model: BiLstmModel) -> str:
    return hashlib.sha256(serialize_model(model).encode("utf-8")).hexdigest()


def save_model(model: BiLstmModel, path: str | Path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(serialize_model(model))


def load_model(path: str | Path) -> BiLstmModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _FORMAT:
        raise DataError(f"{path}: not a {_FORMAT!r} file")
    meta = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("param "):
        key, _, rest = lines[pos].partition(" ")
        meta[key] = rest
        pos += 1
    bidirectional = meta["mode"] == "bidirectional"
    settings = TrainSettings(
        bidirectional=bidirectional,
        hidden_size=int(meta["hidden_size"]),
        epochs=int(meta["epochs"]),
        batch_size=int(meta["batch_size"]),
        learning_rate=float(meta["learning_rate"]),
        seed=int(meta["seed"]),
        grad_clip=None if meta["grad_clip"] == "none" else float(meta["grad_clip"]),
    )
    blocks: dict[str, np.ndarray] = {}
    while pos < len(lines) and lines[pos] != "end":
        head = lines[pos].split()
        name, rows, cols = head[1], int(head[2]), int(head[3])
        pos += 1
        mat = np.array([[float(tok) for tok in lines[pos + r].split()] for r in range(rows)])
        pos += rows
        blocks[name] = mat
    forward_cell = LstmCellParams(
        w_x=blocks["forward.w_x"],
        w_h=blocks["forward.w_h"],
        bias=blocks["forward.bias"].ravel(),
    )
    backward_cell = None
    if bidirectional:
        backward_cell = LstmCellParams(
            w_x=blocks["backward.w_x"],
            w_h=blocks["backward.w_h"],
            bias=blocks["backward.bias"].ravel(),
        )
    dense = DenseParams(weights=blocks["dense.weights"].ravel(), bias=blocks["dense.bias"].ravel())
    return BiLstmModel(
        forward_cell=forward_cell,
        backward_cell=backward_cell,
        dense=dense,
        bidirectional=bidirectional,
        timesteps=int(meta["timesteps"]),
        feature_ids=[int(tok) for tok in meta["feature_ids"].split()],
        settings=settings,
    )


# ---------------------------------------------------------------------------
# Hot kernels (numba unless HDDRUL_DISABLE_JIT=1; X is laid out (T, B, F))


@njit(cache=True)
def _lstm_forward_tbf(X, w_x, w_h, bias):
    T, B, F = X.shape
    H = w_h.shape[0]
    h_seq = np.zeros((T + 1, B, H))
    c_seq = np.zeros((T + 1, B, H))
    gates = np.empty((T, B, 4 * H))
    tanh_c = np.empty((T, B, H))
    for t in range(T):
        z = np.dot(X[t], w_x) + np.dot(h_seq[t], w_h) + bias
        i = 1.0 / (1.0 + np.exp(-z[:, :H]))
        f = 1.0 / (1.0 + np.exp(-z[:, H : 2 * H]))
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = 1.0 / (1.0 + np.exp(-z[:, 3 * H :]))
        c = f * c_seq[t] + i * g
        tc = np.tanh(c)
        h_seq[t + 1] = o * tc
        c_seq[t + 1] = c
        gates[t, :, :H] = i
        gates[t, :, H : 2 * H] = f
        gates[t, :, 2 * H : 3 * H] = g
        gates[t, :, 3 * H :] = o
        tanh_c[t] = tc
    return h_seq, c_seq, gates, tanh_c


@njit(cache=True)
def _lstm_backward_tbf(X, w_x, w_h, h_seq, c_seq, gates, tanh_c, dh_last):
    T, B, F = X.shape
    H = w_h.shape[0]
    d_wx = np.zeros_like(w_x)
    d_wh = np.zeros_like(w_h)
    d_b = np.zeros(4 * H)
    dh = dh_last.copy()
    dc = np.zeros((B, H))
    dz = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        i = gates[t][:, :H]
        f = gates[t][:, H : 2 * H]
        g = gates[t][:, 2 * H : 3 * H]
        o = gates[t][:, 3 * H :]
        tc = tanh_c[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz[:, :H] = (dc * g) * i * (1.0 - i)
        dz[:, H : 2 * H] = (dc * c_seq[t]) * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = (dc * i) * (1.0 - g * g)
        dz[:, 3 * H :] = do * o * (1.0 - o)
        d_wx += np.dot(X[t].T, dz)
        d_wh += np.dot(h_seq[t].T, dz)
        d_b += dz.sum(axis=0)
        dh = np.dot(dz, w_h.T)
        dc = dc * f
    return d_wx, d_wh, d_b
