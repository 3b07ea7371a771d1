"""Feed-forward network with identity-prediction BCE loss and exact backpropagation.

Layer weights are stored ``out_dim x in_dim``; a batch is a matrix with one
sample per row, so a layer computes ``act(x @ W.T + b)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .linalg import Rng, ShapeError, as_matrix

PROB_EPS = 1e-12


class Activation(str, enum.Enum):
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, value) -> Activation:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown activation {value!r}; choose from {[a.value for a in cls]}") from None


OUTPUT_ACTIVATIONS = (Activation.SIGMOID, Activation.SOFTMAX)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def apply_activation(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.TANH:
        return np.tanh(z)
    if kind is Activation.SIGMOID:
        return sigmoid(z)
    if kind is Activation.SOFTMAX:
        return softmax(z)
    return z.copy()


def _hidden_derivative(kind: Activation, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    if kind is Activation.RELU:
        return (z > 0).astype(np.float64)
    if kind is Activation.TANH:
        return 1.0 - h * h
    if kind is Activation.SIGMOID:
        return h * (1.0 - h)
    if kind is Activation.IDENTITY:
        return np.ones_like(z)
    raise ValueError(f"{kind.value} cannot be used on a hidden layer")


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation

    def __post_init__(self):
        self.weights = as_matrix(self.weights, "weights")
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64).reshape(-1)
        self.activation = Activation.parse(self.activation)
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(f"bias has length {self.bias.shape[0]}, weights have {self.weights.shape[0]} rows")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> DenseLayer:
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class Network:
    layers: list[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for i in range(1, len(self.layers)):
            prev, cur = self.layers[i - 1], self.layers[i]
            if cur.in_dim != prev.out_dim:
                raise ShapeError(f"layer {i} expects {cur.in_dim} inputs but layer {i - 1} gives {prev.out_dim}")
        for i, layer in enumerate(self.layers[:-1]):
            if layer.activation is Activation.SOFTMAX:
                raise ValueError(f"softmax is only allowed on the output layer (found on layer {i})")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def output_activation(self) -> Activation:
        return self.layers[-1].activation

    def copy(self) -> Network:
        return Network([layer.copy() for layer in self.layers])

    def parameters(self) -> list[np.ndarray]:
        """Flat list ``[W1, b1, W2, b2, ...]`` of the live parameter arrays."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))


@dataclass
class LayerCache:
    """Intermediates of one forward pass: the input, then per layer the pre- and post-activations."""

    inputs: np.ndarray
    pre_activations: list[np.ndarray] = field(default_factory=list)
    activations: list[np.ndarray] = field(default_factory=list)

    @property
    def probs(self) -> np.ndarray:
        return self.activations[-1]


def init_network(dims, activations, rng: Rng) -> Network:
    """Glorot-uniform weights and zero biases for the layer chain ``dims[0] -> ... -> dims[-1]``."""
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ValueError(f"need at least input and output dims, got {dims}")
    if any(d < 1 for d in dims):
        raise ValueError(f"all dims must be positive, got {dims}")
    activations = [Activation.parse(a) for a in activations]
    if len(activations) != len(dims) - 1:
        raise ValueError(f"{len(dims) - 1} layers need {len(dims) - 1} activations, got {len(activations)}")
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.generator.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Network(layers)


def forward(net: Network, x_batch) -> tuple[np.ndarray, LayerCache]:
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"network expects inputs of dimension {net.input_dim}, got shape {x.shape}")
    cache = LayerCache(inputs=x)
    h = x
    for layer in net.layers:
        z = h @ layer.weights.T + layer.bias
        h = apply_activation(layer.activation, z)
        cache.pre_activations.append(z)
        cache.activations.append(h)
    return h, cache


def predict_proba(net: Network, x_batch) -> np.ndarray:
    return forward(net, x_batch)[0]


def _check_targets(targets, n_rows: int, n_out: int) -> np.ndarray:
    t = np.asarray(targets, dtype=np.intp).reshape(-1)
    if t.shape[0] != n_rows:
        raise ShapeError(f"{n_rows} rows but {t.shape[0]} targets")
    if t.size and (t.min() < 0 or t.max() >= n_out):
        raise IndexError(f"target index out of range [0, {n_out})")
    return t


def bce_loss(probs, targets) -> float:
    """Identity-prediction BCE: for each row, ``-log p[target] - sum_{j != target} log(1 - p[j])``, summed.

    Probabilities are clamped to ``[1e-12, 1 - 1e-12]`` before taking logs.
    """
    p = as_matrix(probs, "probs")
    t = _check_targets(targets, p.shape[0], p.shape[1])
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    rows = np.arange(p.shape[0])
    log_miss = np.log1p(-p)
    total = -log_miss.sum() - np.log(p[rows, t]).sum() + log_miss[rows, t].sum()
    return float(max(total, 0.0))


def output_delta(probs: np.ndarray, targets: np.ndarray, activation: Activation) -> np.ndarray:
    """Gradient of :func:`bce_loss` with respect to the output pre-activations."""
    rows = np.arange(probs.shape[0])
    if activation is Activation.SIGMOID:
        delta = probs.copy()
        delta[rows, targets] -= 1.0
        return delta
    if activation is Activation.SOFTMAX:
        # dL/dp_j * p_j: -1 at the target, p_j / (1 - p_j) elsewhere
        scaled = probs / np.maximum(1.0 - probs, PROB_EPS)
        scaled[rows, targets] = -1.0
        return scaled - probs * scaled.sum(axis=1, keepdims=True)
    raise ValueError(f"output activation must be sigmoid or softmax, got {activation.value}")


def backward(net: Network, cache: LayerCache, targets) -> Gradients:
    """Exact gradient of :func:`bce_loss` over the batch held in ``cache``.

    Where clamping is inactive this is the gradient of the clamped loss; the
    clamp itself is treated as the identity.
    """
    if len(cache.activations) != len(net.layers):
        raise ShapeError(f"cache has {len(cache.activations)} layers, network has {len(net.layers)}")
    for i, (layer, h) in enumerate(zip(net.layers, cache.activations)):
        if h.shape[1] != layer.out_dim:
            raise ShapeError(f"stale cache: layer {i} output width {h.shape[1]} != {layer.out_dim}")
    probs = cache.probs
    t = _check_targets(targets, probs.shape[0], probs.shape[1])
    delta = output_delta(probs, t, net.output_activation)

    grads_w: list[np.ndarray] = [None] * len(net.layers)
    grads_b: list[np.ndarray] = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        below = cache.activations[i - 1] if i > 0 else cache.inputs
        grads_w[i] = delta.T @ below
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            prev = net.layers[i - 1]
            delta = (delta @ net.layers[i].weights) * _hidden_derivative(
                prev.activation, cache.pre_activations[i - 1], cache.activations[i - 1]
            )
    return Gradients(grads_w, grads_b)


def loss_and_gradients(net: Network, x, targets) -> tuple[float, Gradients]:
    probs, cache = forward(net, x)
    return bce_loss(probs, targets), backward(net, cache, targets)
