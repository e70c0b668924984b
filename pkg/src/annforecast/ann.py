"""Feedforward multilayer perceptron trained by online error backpropagation.

All parameters of a network live in one flat float64 vector. Layer ``i``
contributes a ``(n_i, n_{i+1})`` weight block followed by an ``n_{i+1}`` bias
block, so the weight and bias arrays handed out by :class:`Network` are views
into that vector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import Sample, samples_to_arrays

FORMAT_NAME = "annforecast.mlp"
FORMAT_VERSION = 1
DIVERGENCE_LIMIT = 1e6


class TrainingError(RuntimeError):
    pass


class NonFiniteGradientError(TrainingError):
    pass


class DivergenceError(TrainingError):
    pass


@dataclass(frozen=True)
class Activation:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    # derivative expressed through the activation's output
    grad: Callable[[np.ndarray], np.ndarray] | None


def _sigmoid(z):
    # tanh form does not overflow for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


ACTIVATIONS = {
    "sigmoid": Activation("sigmoid", _sigmoid, lambda a: a * (1.0 - a)),
    "tanh": Activation("tanh", np.tanh, lambda a: 1.0 - a * a),
    "identity": Activation("identity", lambda z: z, None),
}


def get_activation(name: str) -> Activation:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


@dataclass(frozen=True)
class Topology:
    layer_sizes: tuple[int, ...] = (5, 21, 21, 1)

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("topology needs an input, at least one hidden and an output layer")
        if any(n < 1 for n in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] != 1:
            raise ValueError("output layer must have exactly one node")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s, s[1:]))

    def __str__(self):
        return ":".join(map(str, self.layer_sizes))


def _layer_slices(topology: Topology):
    """Yield ``(weight_slice, weight_shape, bias_slice)`` per layer."""
    offset = 0
    s = topology.layer_sizes
    for fan_in, fan_out in zip(s, s[1:]):
        w = slice(offset, offset + fan_in * fan_out)
        offset = w.stop
        b = slice(offset, offset + fan_out)
        offset = b.stop
        yield w, (fan_in, fan_out), b


def _views(topology: Topology, flat: np.ndarray):
    weights, biases = [], []
    for ws, shape, bs in _layer_slices(topology):
        weights.append(flat[ws].reshape(shape))
        biases.append(flat[bs])
    return weights, biases


@dataclass(frozen=True, eq=False)
class Network:
    topology: Topology
    params: np.ndarray
    hidden_activation: str = "sigmoid"
    output_activation: str = "identity"
    init_seed: int | None = None
    _weights: list = field(init=False, repr=False)
    _biases: list = field(init=False, repr=False)

    def __post_init__(self):
        params = np.array(self.params, dtype=float)
        if params.shape != (self.topology.n_params,):
            raise ValueError(
                f"expected {self.topology.n_params} parameters for {self.topology}, got {params.shape}"
            )
        if not np.all(np.isfinite(params)):
            raise ValueError("network parameters must be finite")
        get_activation(self.hidden_activation)
        get_activation(self.output_activation)
        params.flags.writeable = False
        object.__setattr__(self, "params", params)
        w, b = _views(self.topology, params)
        object.__setattr__(self, "_weights", w)
        object.__setattr__(self, "_biases", b)

    @property
    def weights(self) -> list[np.ndarray]:
        return self._weights

    @property
    def biases(self) -> list[np.ndarray]:
        return self._biases

    def with_params(self, params: np.ndarray) -> Network:
        return Network(self.topology, params, self.hidden_activation,
                       self.output_activation, self.init_seed)

    def same_as(self, other: Network) -> bool:
        """Bitwise equality of topology, activations and parameters."""
        return (
            self.topology == other.topology
            and self.hidden_activation == other.hidden_activation
            and self.output_activation == other.output_activation
            and self.params.tobytes() == other.params.tobytes()
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 1000
    shuffle_seed: int = 0
    init_seed: int = 42
    init_range: float = 0.5

    def __post_init__(self):
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be a finite non-negative number")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError("epochs must be a positive integer")
        if not self.init_range > 0:
            raise ValueError("init_range must be positive")


def init_network(
    topology: Topology,
    init_seed: int,
    init_range: float,
    hidden_activation: str = "sigmoid",
    output_activation: str = "identity",
) -> Network:
    """Draw every weight and bias uniformly from ``[-init_range, init_range]``."""
    if init_range < 0:
        raise ValueError("init_range must be non-negative")
    rng = np.random.default_rng(init_seed)
    params = np.empty(topology.n_params)
    for ws, _, bs in _layer_slices(topology):
        params[ws] = rng.uniform(-init_range, init_range, ws.stop - ws.start)
        params[bs] = rng.uniform(-init_range, init_range, bs.stop - bs.start)
    params += 0.0  # normalise any -0.0 from a zero range
    return Network(topology, params, hidden_activation, output_activation, init_seed)


def _check_inputs(net: Network, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.shape != (net.topology.n_inputs,):
        raise ValueError(f"network expects {net.topology.n_inputs} inputs, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    return x


def forward(net: Network, inputs: Sequence[float]) -> float:
    """Network output for one input window (scaled units)."""
    a = _check_inputs(net, inputs)
    hidden = get_activation(net.hidden_activation)
    output = get_activation(net.output_activation)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = (output if i == last else hidden).fn(a @ w + b)
    return float(a[0])


def forward_batch(net: Network, x: np.ndarray) -> np.ndarray:
    """Row-wise :func:`forward` over an ``(n, n_inputs)`` matrix."""
    a = np.asarray(x, dtype=float)
    hidden = get_activation(net.hidden_activation)
    output = get_activation(net.output_activation)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = (output if i == last else hidden).fn(a @ w + b)
    return a[:, 0]


def _backprop_into(x, target, weights, biases, grad_w, grad_b, hidden, output):
    """Fill ``grad_w``/``grad_b`` with d(0.5*err^2)/dparam; return the error."""
    acts = [x]
    a = x
    last = len(weights) - 1
    for i in range(last + 1):
        z = a @ weights[i]
        z += biases[i]
        a = (output if i == last else hidden).fn(z)
        acts.append(a)
    err = a - target
    delta = err if output.grad is None else err * output.grad(a)
    for i in range(last, -1, -1):
        np.multiply(acts[i][:, None], delta, out=grad_w[i])
        grad_b[i][...] = delta
        if i:
            delta = (weights[i] @ delta) * hidden.grad(acts[i])
    return float(err[0])


def _raise_non_finite(topology: Topology, grad: np.ndarray, where: str = ""):
    for layer, (ws, _, bs) in enumerate(_layer_slices(topology)):
        if not (np.all(np.isfinite(grad[ws])) and np.all(np.isfinite(grad[bs]))):
            raise NonFiniteGradientError(f"non-finite gradient in layer {layer + 1}{where}")
    raise NonFiniteGradientError(f"non-finite gradient{where}")


def gradient(net: Network, sample: Sample) -> tuple[np.ndarray, float]:
    """Analytic gradient of ``0.5 * (output - target)**2`` as a flat vector.

    Returns the gradient and the signed output error.
    """
    x = _check_inputs(net, sample.inputs)
    grad = np.zeros(net.topology.n_params)
    gw, gb = _views(net.topology, grad)
    err = _backprop_into(
        x, float(sample.target), net.weights, net.biases, gw, gb,
        get_activation(net.hidden_activation), get_activation(net.output_activation),
    )
    if not np.all(np.isfinite(grad)):
        _raise_non_finite(net.topology, grad)
    return grad, err


def backprop_step(
    net: Network,
    sample: Sample,
    cfg: TrainConfig,
    velocity: np.ndarray | None = None,
) -> tuple[Network, np.ndarray, float]:
    """One online momentum update.

    ``update = momentum * previous_update - learning_rate * gradient``.
    The returned squared error is measured before the update.
    """
    if not math.isfinite(sample.target):
        raise ValueError("sample target must be finite")
    grad, err = gradient(net, sample)
    if velocity is None:
        velocity = np.zeros_like(grad)
    new_velocity = cfg.momentum * velocity - cfg.learning_rate * grad
    return net.with_params(net.params + new_velocity), new_velocity, err * err


def loss(net: Network, sample: Sample) -> float:
    return 0.5 * (forward(net, sample.inputs) - sample.target) ** 2


def numeric_gradient(net: Network, sample: Sample, h: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of :func:`gradient`, one parameter at a time."""
    if not h > 0:
        raise ValueError("step h must be positive")
    base = net.params.copy()
    est = np.empty_like(base)
    for k in range(base.size):
        plus, minus = base.copy(), base.copy()
        plus[k] += h
        minus[k] -= h
        est[k] = (loss(net.with_params(plus), sample) - loss(net.with_params(minus), sample)) / (2 * h)
    return est


def train(net: Network, samples: Sequence[Sample], cfg: TrainConfig) -> tuple[Network, np.ndarray]:
    """Online backpropagation with momentum for ``cfg.epochs`` passes.

    Sample order is reshuffled every epoch from a generator seeded with
    ``cfg.shuffle_seed``. Returns the trained network and the per-epoch mean
    squared error (accumulated from the pre-update errors of that epoch).
    """
    if not samples:
        raise ValueError("no training samples")
    x_all, y_all = samples_to_arrays(samples)
    if x_all.shape[1] != net.topology.n_inputs:
        raise ValueError(f"samples have width {x_all.shape[1]}, network expects {net.topology.n_inputs}")

    topology = net.topology
    params = net.params.copy()
    grad = np.zeros_like(params)
    velocity = np.zeros_like(params)
    step = np.empty_like(params)
    weights, biases = _views(topology, params)
    grad_w, grad_b = _views(topology, grad)
    hidden = get_activation(net.hidden_activation)
    output = get_activation(net.output_activation)
    lr, mom = cfg.learning_rate, cfg.momentum

    rng = np.random.default_rng(cfg.shuffle_seed)
    n = len(y_all)
    trace = np.empty(cfg.epochs)
    # overflow surfaces through the finiteness checks below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            total = 0.0
            for idx in rng.permutation(n):
                err = _backprop_into(x_all[idx], y_all[idx], weights, biases,
                                     grad_w, grad_b, hidden, output)
                if not math.isfinite(err):
                    _raise_non_finite(topology, grad, f" at epoch {epoch + 1}")
                total += err * err
                velocity *= mom
                np.multiply(grad, lr, out=step)
                velocity -= step
                params += velocity
            mse = total / n
            if not math.isfinite(mse) or mse > DIVERGENCE_LIMIT:
                raise DivergenceError(f"training diverged at epoch {epoch + 1}: mse={mse}")
            if not np.all(np.isfinite(params)):
                raise DivergenceError(f"non-finite weights after epoch {epoch + 1}")
            trace[epoch] = mse
    return net.with_params(params), trace


# ---------------------------------------------------------------- persistence

def _num(x: float) -> str:
    # 17 significant digits round-trip every float64 exactly
    return format(float(x), ".16e")


def _matrix(a: np.ndarray, indent: str) -> str:
    rows = [indent + "  [" + ", ".join(_num(v) for v in row) + "]" for row in a]
    return "[\n" + ",\n".join(rows) + "\n" + indent + "]"


def dumps_network(net: Network, metadata: dict | None = None) -> str:
    """Serialise ``net`` to the versioned JSON model format.

    ``metadata`` is stored verbatim under ``"metadata"``; float values in it
    should already be strings or exact JSON numbers.
    """
    head = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "topology": list(net.topology.layer_sizes),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
        "init_seed": net.init_seed,
        "metadata": metadata or {},
    }
    body = json.dumps(head, indent=2, sort_keys=False)[:-2]
    layers = []
    for w, b in zip(net.weights, net.biases):
        layers.append(
            "    {\n"
            f'      "weights": {_matrix(w, "      ")},\n'
            f'      "biases": [{", ".join(_num(v) for v in b)}]\n'
            "    }"
        )
    return body + ',\n  "layers": [\n' + ",\n".join(layers) + "\n  ]\n}\n"


def loads_network(text: str) -> tuple[Network, dict]:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"not a model file (format={doc.get('format')!r})")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    topology = Topology(tuple(doc["topology"]))
    parts = []
    for layer in doc["layers"]:
        parts.append(np.asarray(layer["weights"], dtype=float).ravel())
        parts.append(np.asarray(layer["biases"], dtype=float))
    net = Network(topology, np.concatenate(parts), doc["hidden_activation"],
                  doc["output_activation"], doc.get("init_seed"))
    return net, doc.get("metadata", {})
