"""From-scratch multilayer perceptron: sigmoid hidden layers, softmax output.

Parameters live in one flat float64 vector (per layer: row-major weight
matrix, then biases), which is also the unit of exchange for model
aggregation.  Gradients are exact backpropagation of the mean cross-entropy;
the inner loops are jit-compiled because federated runs take millions of
single-sample steps.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

_PROB_FLOOR = 1e-12
_MAGIC = b"FHO1"


class NumericalError(Exception):
    """Training produced non-finite parameters or loss."""


def param_count(dims: tuple[int, ...] | list[int]) -> int:
    """Total parameters: per adjacent pair, n_in*n_out weights + n_out biases."""
    if len(dims) < 2:
        raise ValueError("at least two layer sizes are required")
    if any(d <= 0 for d in dims):
        raise ValueError("layer sizes must be positive")
    return sum(n_in * n_out + n_out for n_in, n_out in zip(dims[:-1], dims[1:]))


@dataclass
class MlpParams:
    dims: tuple[int, ...]
    values: np.ndarray  # flat float64, layout per param_count

    def __post_init__(self) -> None:
        self.dims = tuple(int(d) for d in self.dims)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (param_count(self.dims),):
            raise ValueError("parameter vector length does not match dims")

    def copy(self) -> "MlpParams":
        return MlpParams(self.dims, self.values.copy())

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(weight view, bias view) per layer; views alias the flat vector."""
        out = []
        offset = 0
        for n_in, n_out in zip(self.dims[:-1], self.dims[1:]):
            w = self.values[offset : offset + n_in * n_out].reshape(n_out, n_in)
            offset += n_in * n_out
            b = self.values[offset : offset + n_out]
            offset += n_out
            out.append((w, b))
        return out


def init_params(dims: tuple[int, ...], rng: np.random.Generator) -> MlpParams:
    """Uniform Glorot-style weights, zero biases."""
    chunks = []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        chunks.append(rng.uniform(-limit, limit, size=n_in * n_out))
        chunks.append(np.zeros(n_out))
    return MlpParams(tuple(dims), np.concatenate(chunks))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


def _forward_stack(params: MlpParams, X: np.ndarray) -> list[np.ndarray]:
    """Activations per layer, inputs first, output probabilities last."""
    acts = [X]
    layers = params.layers()
    a = X
    for w, b in layers[:-1]:
        a = _sigmoid(a @ w.T + b)
        acts.append(a)
    w, b = layers[-1]
    acts.append(_softmax_rows(a @ w.T + b))
    return acts


def _as_batch(X: np.ndarray, dim: int, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} columns")
    return np.ascontiguousarray(X)


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities; accepts one input vector or a batch matrix."""
    single = np.asarray(x).ndim == 1
    X = _as_batch(x, params.dims[0], "input")
    probs = _forward_stack(params, X)[-1]
    return probs[0] if single else probs


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean negative log-likelihood of one-hot targets, natural log."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    clipped = np.maximum(probs, _PROB_FLOOR)
    return float(-(targets * np.log(clipped)).sum(axis=1).mean())


def loss(params: MlpParams, X: np.ndarray, Y: np.ndarray) -> float:
    """Mean cross-entropy of the batch; batch must be non-empty."""
    X = _as_batch(X, params.dims[0], "input")
    Y = _as_batch(Y, params.dims[-1], "target")
    if X.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    return cross_entropy(_forward_stack(params, X)[-1], Y)


@njit(cache=True)
def _backprop_flat(
    values: np.ndarray,
    dims: np.ndarray,
    X: np.ndarray,
    Y: np.ndarray,
    grad: np.ndarray,
    acts: np.ndarray,
    deltas: np.ndarray,
    back: np.ndarray,
) -> None:
    """Accumulate the mean-loss gradient over the batch into grad.

    acts, deltas and back are (n_layers, max_width) / (max_width,)
    workspaces owned by the caller.
    """
    n_layers = dims.shape[0]
    batch = X.shape[0]
    grad[:] = 0.0
    for s in range(batch):
        for i in range(dims[0]):
            acts[0, i] = X[s, i]
        off = 0
        for layer in range(n_layers - 1):
            n_in = dims[layer]
            n_out = dims[layer + 1]
            w_off = off
            b_off = off + n_in * n_out
            for o in range(n_out):
                z = values[b_off + o]
                base = w_off + o * n_in
                for i in range(n_in):
                    z += values[base + i] * acts[layer, i]
                if layer < n_layers - 2:
                    acts[layer + 1, o] = 1.0 / (1.0 + math.exp(-z))
                else:
                    acts[layer + 1, o] = z
            off = b_off + n_out
        n_last = dims[n_layers - 1]
        zmax = acts[n_layers - 1, 0]
        for o in range(1, n_last):
            if acts[n_layers - 1, o] > zmax:
                zmax = acts[n_layers - 1, o]
        zsum = 0.0
        for o in range(n_last):
            e = math.exp(acts[n_layers - 1, o] - zmax)
            acts[n_layers - 1, o] = e
            zsum += e
        for o in range(n_last):
            acts[n_layers - 1, o] /= zsum

        for o in range(n_last):
            deltas[o] = (acts[n_layers - 1, o] - Y[s, o]) / batch
        for layer in range(n_layers - 2, -1, -1):
            n_in = dims[layer]
            n_out = dims[layer + 1]
            b_off = off - n_out
            w_off = b_off - n_in * n_out
            for o in range(n_out):
                grad[b_off + o] += deltas[o]
                d = deltas[o]
                base = w_off + o * n_in
                for i in range(n_in):
                    grad[base + i] += d * acts[layer, i]
            if layer > 0:
                for i in range(n_in):
                    back[i] = 0.0
                for o in range(n_out):
                    d = deltas[o]
                    base = w_off + o * n_in
                    for i in range(n_in):
                        back[i] += values[base + i] * d
                for i in range(n_in):
                    a = acts[layer, i]
                    deltas[i] = back[i] * a * (1.0 - a)
            off = w_off


@njit(cache=True)
def _sgd_single_epoch(
    values: np.ndarray,
    dims: np.ndarray,
    X: np.ndarray,
    Y: np.ndarray,
    order: np.ndarray,
    lr: float,
    grad: np.ndarray,
    acts: np.ndarray,
    deltas: np.ndarray,
    back: np.ndarray,
) -> None:
    """One epoch of pure (batch size 1) SGD in shuffled order."""
    for k in range(order.shape[0]):
        s = order[k]
        _backprop_flat(values, dims, X[s : s + 1], Y[s : s + 1], grad, acts, deltas, back)
        for j in range(values.shape[0]):
            values[j] -= lr * grad[j]


def _workspaces(dims: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    width = max(dims)
    return (
        np.asarray(dims, dtype=np.int64),
        np.empty((len(dims), width)),
        np.empty(width),
        np.empty(width),
    )


def gradient(params: MlpParams, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Exact gradient of loss() with respect to the flat parameter vector."""
    X = _as_batch(X, params.dims[0], "input")
    Y = _as_batch(Y, params.dims[-1], "target")
    if X.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    grad = np.empty_like(params.values)
    dims, acts, deltas, back = _workspaces(params.dims)
    _backprop_flat(params.values, dims, X, Y, grad, acts, deltas, back)
    return grad


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 1
    batch_size: int = 1
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0.0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def sgd_train(params: MlpParams, X: np.ndarray, Y: np.ndarray, cfg: TrainConfig) -> MlpParams:
    """Mini-batch SGD over seeded shuffles; deterministic given all inputs."""
    X = _as_batch(X, params.dims[0], "input")
    Y = _as_batch(Y, params.dims[-1], "target")
    n = X.shape[0]
    if n == 0:
        raise ValueError("dataset must be non-empty")
    out = params.copy()
    dims, acts, deltas, back = _workspaces(params.dims)
    grad = np.empty_like(out.values)
    rng = np.random.default_rng(cfg.shuffle_seed)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        if cfg.batch_size == 1:
            _sgd_single_epoch(
                out.values, dims, X, Y, order, cfg.learning_rate, grad, acts, deltas, back
            )
        else:
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                _backprop_flat(
                    out.values,
                    dims,
                    np.ascontiguousarray(X[idx]),
                    np.ascontiguousarray(Y[idx]),
                    grad,
                    acts,
                    deltas,
                    back,
                )
                out.values -= cfg.learning_rate * grad
    if not np.all(np.isfinite(out.values)):
        raise NumericalError("parameters diverged during training")
    return out


def serialize(params: MlpParams) -> bytes:
    """Binary codec: magic, u32-LE layer count, u32-LE dims, f64-LE values."""
    header = _MAGIC + struct.pack("<I", len(params.dims))
    header += struct.pack(f"<{len(params.dims)}I", *params.dims)
    return header + params.values.astype("<f8").tobytes()


def deserialize(data: bytes) -> MlpParams:
    if len(data) < 8 or data[:4] != _MAGIC:
        raise ValueError("malformed header")
    (n_dims,) = struct.unpack_from("<I", data, 4)
    if n_dims < 2 or len(data) < 8 + 4 * n_dims:
        raise ValueError("malformed header")
    dims = struct.unpack_from(f"<{n_dims}I", data, 8)
    payload = data[8 + 4 * n_dims :]
    expected = param_count(dims) * 8
    if len(payload) != expected:
        raise ValueError(f"payload length mismatch: got {len(payload)}, want {expected}")
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    return MlpParams(dims, values)


@dataclass
class Scaler:
    """Per-coordinate standardization frozen into the model artifact."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        X = np.asarray(X, dtype=float)
        return cls(mean=X.mean(axis=0), std=np.maximum(X.std(axis=0), 1e-8))

    @classmethod
    def identity(cls, dim: int) -> "Scaler":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


@dataclass
class MlpModel:
    """Trained classifier: parameters plus the frozen input scaler."""

    params: MlpParams
    scaler: Scaler

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return forward(self.params, self.scaler.transform(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        probs = np.atleast_2d(self.predict_proba(X))
        return np.argmax(probs, axis=1)

    def accuracy(self, X: np.ndarray, Y: np.ndarray) -> float:
        pred = self.predict(X)
        truth = np.argmax(np.atleast_2d(Y), axis=1)
        return float(np.mean(pred == truth))


def model_to_json(model: MlpModel, path: str | Path) -> None:
    payload = {
        "dims": list(model.params.dims),
        "values": model.params.values.tolist(),
        "input_mean": model.scaler.mean.tolist(),
        "input_std": model.scaler.std.tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def model_from_json(path: str | Path) -> MlpModel:
    payload = json.loads(Path(path).read_text())
    params = MlpParams(tuple(payload["dims"]), np.asarray(payload["values"], dtype=float))
    scaler = Scaler(
        mean=np.asarray(payload["input_mean"], dtype=float),
        std=np.asarray(payload["input_std"], dtype=float),
    )
    return MlpModel(params=params, scaler=scaler)
