"""Minimal dense ReLU network with hand-written backprop.

Everything runs in float64 and is deterministic for a fixed generator, so
analytic gradients can be audited against central finite differences and
whole training runs can be replayed bit for bit. Probabilities produced by
:func:`softmax` live on the simplex: rows sum to 1 and entries are in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericError

# Floor applied to every probability that enters a log, so one-hot
# predictions never produce -inf.
PROB_FLOOR = 1e-12


class Mlp:
    """Fully connected network: ReLU hidden layers, linear output layer.

    Weights are Glorot-uniform samples from the supplied generator; biases
    start at zero. Layer i maps fan_in -> fan_out via ``x @ w + b`` with
    ``w.shape == (fan_in, fan_out)``.
    """

    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise ConfigError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ConfigError(f"layer {i}: bias shape {b.shape} does not match weight {w.shape}")
            if i > 0 and weights[i - 1].shape[1] != w.shape[0]:
                raise ConfigError(f"layer {i}: input dim {w.shape[0]} does not chain from previous layer")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericError(f"layer {i}: non-finite parameters")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    @classmethod
    def init(cls, input_dim, hidden_dims, num_classes, rng):
        """Build a fresh network with deterministic seeded initialization."""
        if input_dim < 1 or num_classes < 1:
            raise ConfigError("input_dim and num_classes must be >= 1")
        dims = [input_dim, *hidden_dims, num_classes]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    @property
    def num_classes(self):
        return self.weights[-1].shape[1]

    @property
    def num_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def to_vector(self):
        """Flatten all parameters into one float64 vector (weights then bias, per layer)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_from_vector(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.num_params,):
            raise ConfigError(f"expected vector of length {self.num_params}, got {vec.shape}")
        offset = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = vec[offset:offset + w.size].reshape(w.shape)
            offset += w.size
            b[...] = vec[offset:offset + b.size]
            offset += b.size


@dataclass
class ForwardCache:
    """Per-layer intermediates of one forward pass, kept for backprop."""

    inputs: np.ndarray
    pre_activations: list  # z_i = h_{i-1} @ w_i + b_i, one per layer
    activations: list      # relu(z_i) for hidden layers only

    @property
    def logits(self):
        return self.pre_activations[-1]


@dataclass
class Gradients:
    """Loss gradients, shape-congruent with an :class:`Mlp`."""

    weights: list
    biases: list

    def to_vector(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vec, like):
        """Unflatten ``vec`` into gradients shaped like the network ``like``."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (like.num_params,):
            raise ConfigError(f"expected vector of length {like.num_params}, got {vec.shape}")
        weights, biases = [], []
        offset = 0
        for w, b in zip(like.weights, like.biases):
            weights.append(vec[offset:offset + w.size].reshape(w.shape).copy())
            offset += w.size
            biases.append(vec[offset:offset + b.size].copy())
            offset += b.size
        return cls(weights, biases)

    @classmethod
    def zeros_like(cls, net):
        return cls([np.zeros_like(w) for w in net.weights],
                   [np.zeros_like(b) for b in net.biases])

    def add_scaled(self, other, scale=1.0):
        """In-place ``self += scale * other``."""
        for i in range(len(self.weights)):
            self.weights[i] += scale * other.weights[i]
            self.biases[i] += scale * other.biases[i]
        return self

    def scale(self, factor):
        for i in range(len(self.weights)):
            self.weights[i] *= factor
            self.biases[i] *= factor
        return self

    def all_finite(self):
        return all(np.all(np.isfinite(w)) for w in self.weights) and \
            all(np.all(np.isfinite(b)) for b in self.biases)


def forward(net, batch):
    """Run the network on a (B, input_dim) batch and keep intermediates."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ConfigError(f"batch shape {x.shape} incompatible with input_dim {net.input_dim}")
    pre, act = [], []
    h = x
    last = len(net.weights) - 1
    # overflow to inf is tolerated here; downstream finiteness checks turn it
    # into a NumericError instead of a warning storm
    with np.errstate(over="ignore", invalid="ignore"):
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            z = h @ w + b
            pre.append(z)
            if i < last:
                h = np.maximum(z, 0.0)
                act.append(h)
    return ForwardCache(inputs=x, pre_activations=pre, activations=act)


def softmax(logits):
    """Row-wise softmax with max-subtraction so |logit| <= 1e4 cannot overflow."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits passed to softmax")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs, labels):
    """Mean negative log-probability of the true labels, probabilities floored."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape[0] != probs.shape[0]:
        raise DataError(f"{labels.shape[0]} labels for {probs.shape[0]} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise DataError(f"label out of range [0, {probs.shape[1]})")
    picked = probs[np.arange(probs.shape[0]), labels]
    return float(-np.log(np.clip(picked, PROB_FLOOR, 1.0)).mean())


def cross_entropy_grad(probs, labels):
    """Gradient of mean cross-entropy with respect to the logits: (p - y) / B."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    grad = probs.copy()
    grad[np.arange(probs.shape[0]), labels] -= 1.0
    return grad / probs.shape[0]


def softmax_grad_to_logits(probs, grad_wrt_probs):
    """Chain a gradient w.r.t. probabilities back through row-wise softmax."""
    inner = (grad_wrt_probs * probs).sum(axis=1, keepdims=True)
    return probs * (grad_wrt_probs - inner)


def backward(net, cache, upstream):
    """Exact chain-rule gradients given d(loss)/d(logits)."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cache.logits.shape:
        raise ConfigError(f"upstream shape {upstream.shape} != logits shape {cache.logits.shape}")
    n_layers = len(net.weights)
    dws = [None] * n_layers
    dbs = [None] * n_layers
    delta = upstream
    for i in reversed(range(n_layers)):
        h_in = cache.inputs if i == 0 else cache.activations[i - 1]
        dws[i] = h_in.T @ delta
        dbs[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (cache.pre_activations[i - 1] > 0.0)
    return Gradients(dws, dbs)


def sgd_step(net, grads, lr):
    """Plain gradient descent, in place: theta <- theta - lr * g."""
    if lr < 0:
        raise ConfigError("learning rate must be >= 0")
    if not grads.all_finite():
        raise NumericError("non-finite gradient in sgd_step")
    for w, b, dw, db in zip(net.weights, net.biases, grads.weights, grads.biases):
        w -= lr * dw
        b -= lr * db
    return net
