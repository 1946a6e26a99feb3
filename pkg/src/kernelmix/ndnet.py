"""A small dense feed-forward network with hand-written backprop.

Inputs are row-major batches: an array of shape ``(n, d_in)`` (or a single
vector of length ``d_in``).  Layer k stores a weight matrix of shape
``(dims[k+1], dims[k])`` so a layer computes ``a = x @ W.T + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError, TrainingDivergedError

ACTIVATIONS = ("linear", "relu", "rectified_quadratic", "exponential", "tanh")


def relu(x):
    return np.maximum(x, 0.0)


def rectified_quadratic(x):
    """max(0, x) squared: zero for x <= 0, x**2 otherwise."""
    r = np.maximum(x, 0.0)
    out = r * r
    return out if np.ndim(out) else float(out)


def _activate(kind: str, a: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return a
    if kind == "relu":
        return relu(a)
    if kind == "rectified_quadratic":
        return rectified_quadratic(a)
    if kind == "exponential":
        return np.exp(a)
    if kind == "tanh":
        return np.tanh(a)
    raise ParameterError(f"unknown activation {kind!r}")


def _activation_grad(kind: str, a: np.ndarray, h: np.ndarray) -> np.ndarray:
    # derivative of the activation at pre-activation a, with h = act(a)
    if kind == "linear":
        return np.ones_like(a)
    if kind == "relu":
        return (a > 0).astype(a.dtype)
    if kind == "rectified_quadratic":
        return 2.0 * np.maximum(a, 0.0)
    if kind == "exponential":
        return h
    if kind == "tanh":
        return 1.0 - h * h
    raise ParameterError(f"unknown activation {kind!r}")


@dataclass
class DenseNet:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        dims = [int(d) for d in self.layer_dims]
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ShapeError(f"layer_dims must be >= 2 positive ints, got {dims}")
        n_layers = len(dims) - 1
        if not (len(self.weights) == len(self.biases) == len(self.activations) == n_layers):
            raise ShapeError("need one weight, bias and activation per layer")
        for k, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if w.shape != (dims[k + 1], dims[k]) or b.shape != (dims[k + 1],):
                raise ShapeError(f"layer {k} has shapes {w.shape}, {b.shape}")
            if act not in ACTIVATIONS:
                raise ParameterError(f"unknown activation {act!r}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ParameterError(f"layer {k} holds non-finite values")
        self.layer_dims = dims

    @property
    def params(self) -> list[np.ndarray]:
        """Weights and biases interleaved: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "activations": list(self.activations),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseNet":
        return cls(
            layer_dims=list(data["layer_dims"]),
            weights=[np.array(w, dtype=float).reshape(o, i) for w, i, o in
                     zip(data["weights"], data["layer_dims"][:-1], data["layer_dims"][1:])],
            biases=[np.array(b, dtype=float) for b in data["biases"]],
            activations=list(data["activations"]),
        )


def init_dense_net(layer_dims, activations, rng: np.random.Generator) -> DenseNet:
    """Glorot-uniform weights, zero biases.

    ``activations`` is either one tag per layer or a pair
    ``(hidden, outer)`` applied to hidden layers and the last layer.
    """
    dims = [int(d) for d in layer_dims]
    n_layers = len(dims) - 1
    if isinstance(activations, str):
        activations = [activations] * n_layers
    activations = list(activations)
    if len(activations) == 2 and n_layers != 2:
        activations = [activations[0]] * (n_layers - 1) + [activations[1]]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return DenseNet(dims, weights, biases, activations)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    outputs: list[np.ndarray]
    squeeze: bool

    @property
    def output(self) -> np.ndarray:
        out = self.outputs[-1]
        return out[0] if self.squeeze else out

    @property
    def preactivation(self) -> np.ndarray:
        out = self.preacts[-1]
        return out[0] if self.squeeze else out


def forward_cache(net: DenseNet, x) -> ForwardCache:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.layer_dims[0]:
        raise ShapeError(f"input shape {x.shape} does not match input width {net.layer_dims[0]}")
    inputs, preacts, outputs = [], [], []
    h = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        a = h @ w.T + b
        h = _activate(act, a)
        preacts.append(a)
        outputs.append(h)
    return ForwardCache(inputs, preacts, outputs, squeeze)


def forward(net: DenseNet, x) -> np.ndarray:
    """Outer-layer activations for a vector or a batch of rows."""
    return forward_cache(net, x).output


def backward(net: DenseNet, cache: ForwardCache, output_grad, wrt_preactivation: bool = False):
    """Backpropagate ``output_grad`` into gradients for every weight and bias.

    ``output_grad`` is dL/d(output) with the same shape as the forward output.
    With ``wrt_preactivation=True`` it is taken as dL/d(pre-activation) of the
    outer layer instead, which is the stable route for exponential outputs.
    Returns ``(weight_grads, bias_grads)``.
    """
    g = np.asarray(output_grad, dtype=float)
    if cache.squeeze and g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.outputs[-1].shape:
        raise ShapeError(f"output_grad shape {g.shape} != output shape {cache.outputs[-1].shape}")
    n_layers = len(net.weights)
    w_grads: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    b_grads: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for k in range(n_layers - 1, -1, -1):
        if not (wrt_preactivation and k == n_layers - 1):
            g = g * _activation_grad(net.activations[k], cache.preacts[k], cache.outputs[k])
        w_grads[k] = g.T @ cache.inputs[k]
        b_grads[k] = g.sum(axis=0)
        if k:
            g = g @ net.weights[k]
    return w_grads, b_grads


def interleave(w_grads, b_grads) -> list[np.ndarray]:
    out = []
    for gw, gb in zip(w_grads, b_grads):
        out.extend((gw, gb))
    return out


# --- optimizers -------------------------------------------------------------


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ParameterError(f"unknown optimizer {self.kind!r}")
        if self.learning_rate <= 0:
            raise ParameterError("learning rate must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ParameterError("Adam needs 0 < beta1, beta2 < 1 and eps > 0")


def optimizer_step(state: OptimizerState, params: list[np.ndarray], grads: list[np.ndarray]):
    """Apply one SGD or bias-corrected Adam update to ``params`` in place."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient")
    state.step_count += 1
    lr = state.learning_rate
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p -= lr * g
        return params, state
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
    b1, b2, t = state.adam_beta1, state.adam_beta2, state.step_count
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.adam_eps)
    return params, state
