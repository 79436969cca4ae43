"""Dense feed-forward networks with exact reverse-mode gradients.

Weights are stored as ``(fan_in, fan_out)`` matrices so a layer computes
``x @ W + b``.  Inputs may be a single vector or a ``(batch, features)``
array; gradients of a batch are summed over the batch.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericalBlowupError

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "tanh")


def _activate(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(name, z, a):
    # derivative of the activation evaluated at pre-activation z / output a
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    return np.ones_like(z)


@dataclass
class ParamGrads:
    """Per-parameter gradients, shape-congruent with an :class:`MLP`."""

    weights: list
    biases: list

    def arrays(self):
        return [*self.weights, *self.biases]

    def global_norm(self):
        return float(np.sqrt(sum(float(np.vdot(g, g)) for g in self.arrays())))

    def scaled(self, factor):
        return ParamGrads([w * factor for w in self.weights], [b * factor for b in self.biases])

    def __add__(self, other):
        return ParamGrads(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def max_relative_error(self, other, floor=1e-8):
        """Elementwise ``|a-b| / max(|a|, |b|, floor)``, maximised over all entries."""
        worst = 0.0
        for a, b in zip(self.arrays(), other.arrays()):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
            worst = max(worst, float(np.max(np.abs(a - b) / denom)))
        return worst


@dataclass
class ForwardCache:
    """Inputs and per-layer pre/post activations recorded by :meth:`MLP.forward`."""

    inputs: np.ndarray
    pre: list
    post: list
    squeeze: bool


class MLP:
    """Fully connected network with one hidden activation and one output activation."""

    def __init__(self, layer_sizes, weights, biases, hidden_activation="tanh",
                 output_activation="identity"):
        layer_sizes = [int(s) for s in layer_sizes]
        _check_layer_sizes(layer_sizes)
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigurationError(f"unknown hidden activation {hidden_activation!r}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigurationError(f"unknown output activation {output_activation!r}")
        if len(weights) != len(layer_sizes) - 1 or len(biases) != len(layer_sizes) - 1:
            raise ConfigurationError("need one weight matrix and bias per layer transition")
        weights = [np.asarray(w, dtype=np.float64) for w in weights]
        biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for k, (w, b) in enumerate(zip(weights, biases)):
            expected = (layer_sizes[k], layer_sizes[k + 1])
            if w.shape != expected or b.shape != (layer_sizes[k + 1],):
                raise ConfigurationError(
                    f"layer {k}: got W{w.shape}, b{b.shape}, expected W{expected}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigurationError(f"layer {k}: non-finite parameters")
        self.layer_sizes = layer_sizes
        # own contiguous copies; finite_diff_grad perturbs flat views in place
        self.weights = [np.ascontiguousarray(w, dtype=np.float64).copy() for w in weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64).copy() for b in biases]
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation

    @classmethod
    def init(cls, layer_sizes, hidden_activation="tanh", output_activation="identity", seed=0):
        """Glorot-uniform weights (bound ``sqrt(6/(fan_in+fan_out))``) and zero biases."""
        layer_sizes = list(layer_sizes)
        _check_layer_sizes(layer_sizes)
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(layer_sizes, weights, biases, hidden_activation, output_activation)

    @property
    def n_layers(self):
        return len(self.weights)

    def copy(self):
        return MLP(self.layer_sizes, [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], self.hidden_activation,
                   self.output_activation)

    def zero_grads(self):
        return ParamGrads([np.zeros_like(w) for w in self.weights],
                          [np.zeros_like(b) for b in self.biases])

    def forward(self, x):
        """Return ``(output, cache)``; output keeps the batch axis of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        batch = x[None, :] if squeeze else x
        if batch.ndim != 2 or batch.shape[1] != self.layer_sizes[0]:
            raise DimensionError(
                f"input has shape {x.shape}, network expects {self.layer_sizes[0]} features"
            )
        if not np.all(np.isfinite(batch)):
            raise NumericalBlowupError("non-finite network input")
        pre, post = [], []
        a = batch
        last = self.n_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = _activate(self.output_activation if k == last else self.hidden_activation, z)
            pre.append(z)
            post.append(a)
        out = a[0] if squeeze else a
        return out, ForwardCache(batch, pre, post, squeeze)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, output_grad):
        """Gradients of a scalar whose derivative w.r.t. the output is ``output_grad``."""
        g = np.asarray(output_grad, dtype=np.float64)
        if cache.squeeze:
            g = g[None, :] if g.ndim == 1 else g
        expected = cache.post[-1].shape
        if g.shape != expected:
            raise DimensionError(f"output_grad shape {g.shape} does not match cache {expected}")
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        last = self.n_layers - 1
        for k in range(last, -1, -1):
            name = self.output_activation if k == last else self.hidden_activation
            delta = g * _activation_grad(name, cache.pre[k], cache.post[k])
            below = cache.inputs if k == 0 else cache.post[k - 1]
            grads_w[k] = below.T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                g = delta @ self.weights[k].T
        return ParamGrads(grads_w, grads_b)

    def apply_update(self, grads, learning_rate):
        """In-place gradient descent step ``theta -= lr * grad``; returns ``self``."""
        if not learning_rate > 0:
            raise ConfigurationError("learning rate must be positive")
        for g, p in zip(grads.arrays(), self.weights + self.biases):
            if g.shape != p.shape:
                raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        # a sum of squares is finite only if every entry is
        if not np.isfinite(grads.global_norm()):
            raise NumericalBlowupError("non-finite gradient")
        for w, gw in zip(self.weights, grads.weights):
            w -= learning_rate * gw
        for b, gb in zip(self.biases, grads.biases):
            b -= learning_rate * gb
        return self

    def parameters(self):
        return [*self.weights, *self.biases]

    # checkpoints ---------------------------------------------------------

    def to_dict(self):
        return {
            "format": "boostctl.mlp/1",
            "layer_sizes": self.layer_sizes,
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            # row-major nested lists; repr round-trips float64 exactly
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(
                doc["layer_sizes"],
                [np.array(w, dtype=np.float64).reshape(a, b) for w, a, b in
                 zip(doc["weights"], doc["layer_sizes"][:-1], doc["layer_sizes"][1:])],
                [np.array(b, dtype=np.float64) for b in doc["biases"]],
                doc["hidden_activation"],
                doc["output_activation"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed network checkpoint: {exc}") from exc

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_layer_sizes(layer_sizes):
    if len(layer_sizes) < 2:
        raise ConfigurationError("an MLP needs at least an input and an output layer")
    if any(int(s) < 1 for s in layer_sizes):
        raise ConfigurationError(f"layer sizes must be positive, got {layer_sizes}")


def mlp_init(layer_sizes, hidden_activation="tanh", output_activation="identity", seed=0):
    return MLP.init(layer_sizes, hidden_activation, output_activation, seed)


def mlp_forward(net, x):
    return net.forward(x)


def mlp_backward(net, cache, output_grad):
    return net.backward(cache, output_grad)


def mlp_apply_update(net, grads, learning_rate):
    return net.apply_update(grads, learning_rate)


def finite_diff_grad(net, loss, x, eps=1e-5):
    """Central-difference estimate of d loss(net(x)) / d theta for every parameter.

    ``loss`` maps the network output to a scalar.  The network is perturbed in
    place and restored before returning.
    """
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    grads = net.zero_grads()
    for param, grad in zip(net.parameters(), grads.arrays()):
        flat_p = param.reshape(-1)
        flat_g = grad.reshape(-1)
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + eps
            up = float(loss(net(x)))
            flat_p[j] = orig - eps
            down = float(loss(net(x)))
            flat_p[j] = orig
            flat_g[j] = (up - down) / (2.0 * eps)
    return grads
