"""Small dense networks with hand-written reverse-mode gradients.

Every network here is a fixed MLP: affine layers with tanh on the hidden
layers and a linear output.  Forward passes accept a single input vector
or a batch (n, d); gradients are accumulated over the batch.  All math is
float64 so the finite-difference checks can be tight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, NumericalError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class Network:
    layer_dims: list[int]
    weights: list[np.ndarray]  # each (fan_out, fan_in)
    biases: list[np.ndarray]   # each (fan_out,)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Network":
        return Network(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass
class GradientSet:
    """Per-parameter gradients, shape-congruent with a Network."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def scale(self, c: float) -> "GradientSet":
        return GradientSet([c * w for w in self.weights], [c * b for b in self.biases])

    def add_(self, other: "GradientSet") -> None:
        for a, b in zip(self.weights, other.weights):
            a += b
        for a, b in zip(self.biases, other.biases):
            a += b

    def all_finite(self) -> bool:
        # sum is non-finite iff some entry is (inf - inf still yields nan)
        total = 0.0
        for w in self.weights:
            total += float(w.sum())
        for b in self.biases:
            total += float(b.sum())
        return np.isfinite(total)


def zero_grads(net: Network) -> GradientSet:
    return GradientSet(
        [np.zeros_like(w) for w in net.weights],
        [np.zeros_like(b) for b in net.biases],
    )


@dataclass
class OptState:
    """Adaptive-moment accumulators for one Network."""

    m_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_w: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0


def opt_init(net: Network) -> OptState:
    return OptState(
        [np.zeros_like(w) for w in net.weights],
        [np.zeros_like(b) for b in net.biases],
        [np.zeros_like(w) for w in net.weights],
        [np.zeros_like(b) for b in net.biases],
        0,
    )


def net_init(layer_dims, seed) -> Network:
    """Build a network with uniform fan-scaled weights and zero biases.

    `seed` may be an int or an existing numpy Generator (the latter lets a
    caller initialize several networks from one stream).
    """
    dims = list(layer_dims)
    if len(dims) < 2 or any((not isinstance(d, (int, np.integer))) or d < 1 for d in dims):
        raise ConfigurationError(f"invalid layer dims: {layer_dims!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(dims, weights, biases)


def net_forward(net: Network, x):
    """Forward pass.  Returns (y, cache) with y matching the input's batch shape.

    x may be (d,) or (n, d).  The cache stores each layer's input and the
    hidden activations, which net_backward consumes.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != net.layer_dims[0]:
        raise ContractError(
            f"input dim {x.shape} incompatible with layer_dims {net.layer_dims}"
        )
    inputs = []   # input to each affine layer
    acts = []     # tanh output of each hidden layer (None for the last, linear layer)
    for k in range(net.n_layers):
        inputs.append(h)
        z = h @ net.weights[k].T + net.biases[k]
        if k < net.n_layers - 1:
            h = np.tanh(z)
            acts.append(h)
        else:
            h = z
            acts.append(None)
    cache = (net.n_layers, inputs, acts)
    y = h[0] if single else h
    return y, cache


def net_backward(net: Network, cache, upstream):
    """Exact gradients of sum_i upstream_i . y_i w.r.t. parameters and input.

    `upstream` matches the forward output's shape ((out,) or (n, out)).
    Batch items contribute additively to the parameter gradients; the
    returned input gradient keeps the batch shape.
    """
    n_layers, inputs, acts = cache
    if (n_layers != net.n_layers or len(inputs) != net.n_layers
            or any(h.shape[1] != d
                   for h, d in zip(inputs, net.layer_dims[:-1]))):
        raise ContractError("cache does not match network")
    upstream = np.asarray(upstream, dtype=float)
    single = upstream.ndim == 1
    delta = upstream[None, :] if single else upstream
    if delta.shape != (inputs[-1].shape[0], net.layer_dims[-1]):
        raise ContractError(
            f"upstream shape {upstream.shape} incompatible with cached batch"
        )
    gw = [None] * net.n_layers
    gb = [None] * net.n_layers
    for k in range(net.n_layers - 1, -1, -1):
        gw[k] = delta.T @ inputs[k]
        gb[k] = delta.sum(axis=0)
        dx = delta @ net.weights[k]
        if k > 0:
            dx = dx * (1.0 - acts[k - 1] ** 2)  # tanh'
        delta = dx
    input_grad = delta[0] if single else delta
    return GradientSet(gw, gb), input_grad


def finite_diff_check(net: Network, x, h: float = 1e-4, grads: GradientSet | None = None):
    """Max relative error between analytic and central-difference gradients.

    The scalar objective is sum(y).  `grads` defaults to the analytic
    gradients; passing a modified set lets tests inject faults.
    """
    if h <= 0:
        raise ConfigurationError("h must be positive")
    x = np.asarray(x, dtype=float)
    y, cache = net_forward(net, x)
    if grads is None:
        grads, _ = net_backward(net, cache, np.ones_like(y))

    def objective():
        return float(np.sum(net_forward(net, x)[0]))

    max_err = 0.0
    for params, analytic in ((net.weights, grads.weights), (net.biases, grads.biases)):
        for arr, g in zip(params, analytic):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                f_plus = objective()
                arr[idx] = orig - h
                f_minus = objective()
                arr[idx] = orig
                numeric = (f_plus - f_minus) / (2.0 * h)
                err = abs(g[idx] - numeric) / max(abs(numeric), 1e-8)
                max_err = max(max_err, err)
    return max_err


def adaptive_update(net: Network, grads: GradientSet, opt: OptState, lr: float):
    """One Adam step (decay 0.9/0.999, eps 1e-8, bias-corrected), in place.

    Returns (net, opt) for convenience.  Rejects non-finite gradients.
    """
    if lr < 0:
        raise ConfigurationError("learning rate must be non-negative")
    if not grads.all_finite():
        raise NumericalError("non-finite gradient; update rejected")
    opt.t += 1
    c1 = 1.0 - ADAM_BETA1 ** opt.t
    c2 = 1.0 - ADAM_BETA2 ** opt.t
    for w, g, m, v in zip(net.weights, grads.weights, opt.m_w, opt.v_w):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        w -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    for b, g, m, v in zip(net.biases, grads.biases, opt.m_b, opt.v_b):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        b -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return net, opt
