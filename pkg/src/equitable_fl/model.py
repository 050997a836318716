"""Multilayer perceptron with hand-written backpropagation.

Parameters live in one flat ``float64`` vector. Layer ``l`` occupies a
``fan_in x fan_out`` weight block (row-major) followed by its bias. Hidden
layers use ReLU; the output layer emits raw logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

__all__ = [
    "ModelParams",
    "Batch",
    "param_count",
    "init_mlp",
    "forward",
    "log_softmax",
    "loss_and_grad",
    "loss",
    "predict",
    "activation_vector",
]


def param_count(layer_sizes) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


@dataclass(frozen=True)
class ModelParams:
    layer_sizes: tuple[int, ...]
    vector: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        vec = np.array(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size != param_count(sizes):
            raise ContractViolation(
                f"parameter vector has {vec.size} entries, layers {sizes} need "
                f"{param_count(sizes)}"
            )
        vec.flags.writeable = False
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "vector", vec)

    @property
    def total_dim(self) -> int:
        return self.vector.size

    def with_vector(self, vector) -> "ModelParams":
        return ModelParams(self.layer_sizes, vector)

    def layers(self):
        """Yield ``(W, b)`` views for each layer."""
        off = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = self.vector[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
            off += fan_in * fan_out
            b = self.vector[off:off + fan_out]
            off += fan_out
            yield w, b


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ContractViolation(f"features must be 2-D, got shape {x.shape}")
        if y.ndim != 1 or y.size != x.shape[0]:
            raise ContractViolation(
                f"{x.shape[0]} feature rows but {y.size} labels"
            )
        if not np.all(np.isfinite(x)):
            raise ContractViolation("features contain non-finite values")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.size


def init_mlp(layer_sizes, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ContractViolation(f"need at least 2 layer sizes, got {sizes}")
    if any(s < 1 for s in sizes):
        raise ContractViolation(f"layer sizes must be >= 1, got {sizes}")
    parts = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        parts.append(np.zeros(fan_out))
    return ModelParams(tuple(sizes), np.concatenate(parts))


def _check_input(params: ModelParams, x: np.ndarray) -> None:
    if x.shape[1] != params.layer_sizes[0]:
        raise ContractViolation(
            f"input has {x.shape[1]} features, network expects {params.layer_sizes[0]}"
        )


def _forward_cache(params: ModelParams, x: np.ndarray):
    acts = [x]
    layers = list(params.layers())
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        acts.append(h)
    return acts, layers


def forward(params: ModelParams, batch: Batch):
    """Return ``(logits, penult)``.

    ``penult`` is the post-ReLU output of the last hidden layer; for a net
    without hidden layers it is the input itself.
    """
    _check_input(params, batch.features)
    acts, _ = _forward_cache(params, batch.features)
    return acts[-1], acts[-2]


def log_softmax(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[axis] == 0:
        raise ContractViolation("log_softmax of an empty vector")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def _check_labels(params: ModelParams, labels: np.ndarray) -> None:
    k = params.layer_sizes[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ContractViolation(f"labels must lie in [0, {k})")


def loss_and_grad(params: ModelParams, batch: Batch):
    """Mean cross-entropy over the batch and its gradient w.r.t. the flat vector."""
    _check_input(params, batch.features)
    _check_labels(params, batch.labels)
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    acts, layers = _forward_cache(params, batch.features)
    m = len(batch)
    logp = log_softmax(acts[-1])
    rows = np.arange(m)
    value = float(-np.mean(logp[rows, batch.labels]))

    delta = np.exp(logp)
    delta[rows, batch.labels] -= 1.0
    delta /= m
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads.append(delta.sum(axis=0))
        grads.append((acts[i].T @ delta).ravel())
        if i > 0:
            delta = (delta @ w.T) * (acts[i] > 0.0)
    grads.reverse()
    return value, np.concatenate(grads)


def loss(params: ModelParams, batch: Batch) -> float:
    _check_input(params, batch.features)
    _check_labels(params, batch.labels)
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    logits, _ = forward(params, batch)
    logp = log_softmax(logits)
    return float(-np.mean(logp[np.arange(len(batch)), batch.labels]))


def predict(params: ModelParams, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    _check_input(params, x)
    acts, _ = _forward_cache(params, x)
    return np.argmax(acts[-1], axis=1)


def activation_vector(params: ModelParams, probe: Batch,
                      layer: str = "penultimate") -> np.ndarray:
    """Distribution fingerprint of a client's data under ``params``.

    Averages the per-sample log-softmax of the chosen layer's output over the
    probe rows, then renormalizes so the result is again a log-probability
    vector (the raw mean of log-probabilities sums to less than one after
    exponentiation whenever the rows differ).
    """
    if len(probe) == 0:
        raise ContractViolation("activation probe is empty")
    logits, penult = forward(params, probe)
    if layer == "penultimate":
        feats = penult
    elif layer == "final":
        feats = logits
    else:
        raise ContractViolation(f"unknown activation layer {layer!r}")
    mean = log_softmax(feats, axis=1).mean(axis=0)
    return log_softmax(mean)
