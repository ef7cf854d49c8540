"""Mixed rectified-power-unit perceptrons: evaluation, gradients, accounting.

A network is an ordered list of dense layers.  Every neuron carries its own
integer activation power t: ``sigma_t(z) = max(z, 0)**t`` for t >= 1, while
t = 0 marks a linear pass-through and is reserved for the output layer.
Networks are immutable values; training code builds new parameter sets
instead of mutating a net in place.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Layer",
    "MixedRepuNetwork",
    "ArchitectureStats",
    "repu",
    "repu_prime",
    "repu_second",
    "forward",
    "forward_batch",
    "backprop",
    "architecture_stats",
    "nonzero_param_count",
    "pdim_bound",
    "serialize",
    "deserialize",
    "random_network",
]


def repu(x, t: int):
    """Rectified power unit: x**t on the positive branch, 0 elsewhere.

    t = 0 is rejected; affine pass-through is a layer-level concept, not an
    activation.
    """
    if t < 1:
        raise ValueError(f"repu power must be >= 1, got t={t}")
    x = np.asarray(x, dtype=float)
    if t == 1:
        return np.maximum(x, 0.0)
    return np.where(x > 0.0, x, 0.0) ** t


def repu_prime(x, t: int):
    """Derivative of sigma_t; the kink value sigma_t'(0) is taken as 0."""
    if t < 1:
        raise ValueError(f"repu power must be >= 1, got t={t}")
    x = np.asarray(x, dtype=float)
    if t == 1:
        return np.where(x > 0.0, 1.0, 0.0)
    return t * np.where(x > 0.0, x, 0.0) ** (t - 1)


def repu_second(x, t: int):
    """Second derivative of sigma_t, with the same 0-at-kink convention."""
    if t < 1:
        raise ValueError(f"repu power must be >= 1, got t={t}")
    x = np.asarray(x, dtype=float)
    if t == 1:
        return np.zeros_like(x)
    if t == 2:
        return np.where(x > 0.0, 2.0, 0.0)
    return t * (t - 1) * np.where(x > 0.0, x, 0.0) ** (t - 2)


def _act(z, powers):
    out = np.empty_like(z)
    for t in np.unique(powers):
        m = powers == t
        if t == 0:
            out[..., m] = z[..., m]
        elif t == 1:
            out[..., m] = np.maximum(z[..., m], 0.0)
        else:
            out[..., m] = np.where(z[..., m] > 0.0, z[..., m], 0.0) ** t
    return out


def _act_prime(z, powers):
    out = np.empty_like(z)
    for t in np.unique(powers):
        m = powers == t
        if t == 0:
            out[..., m] = 1.0
        elif t == 1:
            out[..., m] = np.where(z[..., m] > 0.0, 1.0, 0.0)
        else:
            out[..., m] = t * np.where(z[..., m] > 0.0, z[..., m], 0.0) ** (t - 1)
    return out


def _act_second(z, powers):
    out = np.empty_like(z)
    for t in np.unique(powers):
        m = powers == t
        if t in (0, 1):
            out[..., m] = 0.0
        elif t == 2:
            out[..., m] = np.where(z[..., m] > 0.0, 2.0, 0.0)
        else:
            out[..., m] = t * (t - 1) * np.where(z[..., m] > 0.0, z[..., m], 0.0) ** (t - 2)
    return out


@dataclass(frozen=True)
class Layer:
    """One dense layer: ``a_out = sigma_powers(weights @ a_in + bias)``."""

    weights: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)
    powers: np.ndarray  # (d_out,) integer activation powers

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        b = np.ascontiguousarray(np.asarray(self.bias, dtype=float))
        t = np.ascontiguousarray(np.asarray(self.powers, dtype=int))
        if w.ndim != 2:
            raise ValueError("layer weights must be a 2-d matrix")
        if b.shape != (w.shape[0],) or t.shape != (w.shape[0],):
            raise ValueError(
                f"layer shape mismatch: weights {w.shape}, bias {b.shape}, powers {t.shape}"
            )
        if np.any(t < 0):
            raise ValueError("activation powers must be >= 0")
        w.setflags(write=False)
        b.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "powers", t)

    @property
    def d_in(self) -> int:
        return self.weights.shape[1]

    @property
    def d_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class MixedRepuNetwork:
    """Feed-forward net; all layers but the last are activated (powers >= 1),
    the last layer is affine (all powers 0)."""

    layers: tuple
    declared_bounds: tuple | None = None  # optional (B, B') sup-norm metadata

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k].d_in != layers[k - 1].d_out:
                raise ValueError(
                    f"dimension chain broken between layers {k - 1} and {k}: "
                    f"{layers[k - 1].d_out} -> {layers[k].d_in}"
                )
        if np.any(layers[-1].powers != 0):
            raise ValueError("output layer must be affine (all powers 0)")
        for k, lay in enumerate(layers[:-1]):
            if np.any(lay.powers < 1):
                raise ValueError(f"hidden layer {k} has a power-0 neuron")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].d_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].d_out

    @property
    def hidden_widths(self) -> list:
        return [lay.d_out for lay in self.layers[:-1]]

    def uniform_hidden_power(self) -> int | None:
        """The common hidden power p if every hidden neuron uses sigma_p."""
        powers = np.concatenate([lay.powers for lay in self.layers[:-1]]) if len(self.layers) > 1 else np.array([], int)
        if powers.size == 0:
            return None
        p = int(powers[0])
        return p if np.all(powers == p) else None

    def __call__(self, x):
        return forward(self, x)


@dataclass(frozen=True)
class ArchitectureStats:
    """Bookkeeping of a net: depth D (hidden layers), width W (max hidden
    width), neurons U (sum of hidden widths), size S (count of all weight
    and bias entries, ``sum d_{i+1} (d_i + 1)``)."""

    depth: int
    width: int
    neurons: int
    size: int


def forward(net: MixedRepuNetwork, x):
    """Evaluate the net at a single point; returns a vector (output_dim,)."""
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape[0] != net.input_dim:
        raise ValueError(f"input has dim {a.shape[0]}, net expects {net.input_dim}")
    for lay in net.layers:
        a = _act(lay.weights @ a + lay.bias, lay.powers)
    return a


def forward_batch(net: MixedRepuNetwork, X):
    """Evaluate at a batch of points X (n, d); returns (n, output_dim)."""
    A = np.asarray(X, dtype=float)
    if A.ndim != 2 or A.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {A.shape} does not match input dim {net.input_dim}")
    for lay in net.layers:
        A = _act(A @ lay.weights.T + lay.bias, lay.powers)
    return A


def backprop(net: MixedRepuNetwork, x, seed=None):
    """Reverse pass at x for the scalar ``seed . forward(net, x)``.

    Returns ``(param_grads, input_grad)`` where param_grads is a list of
    (dW, db) pairs aligned with net.layers.  For scalar-output nets the
    default seed is 1.  At kinks the sigma_t'(0) = 0 convention applies.
    """
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape[0] != net.input_dim:
        raise ValueError(f"input has dim {a.shape[0]}, net expects {net.input_dim}")
    acts = [a]
    zs = []
    for lay in net.layers:
        z = lay.weights @ acts[-1] + lay.bias
        zs.append(z)
        acts.append(_act(z, lay.powers))
    if seed is None:
        if net.output_dim != 1:
            raise ValueError("seed vector required for vector-output nets")
        seed = np.ones(1)
    delta = np.asarray(seed, dtype=float).reshape(-1)
    param_grads = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        lay = net.layers[k]
        dz = delta * _act_prime(zs[k], lay.powers)
        param_grads[k] = (np.outer(dz, acts[k]), dz.copy())
        delta = lay.weights.T @ dz
    return param_grads, delta


def input_gradient(net: MixedRepuNetwork, x, j: int | None = None):
    """Gradient of a scalar-output net w.r.t. its input (or one coordinate)."""
    _, g = backprop(net, x)
    return g if j is None else g[j]


def input_gradient_batch(net: MixedRepuNetwork, X, seed=None):
    """Input gradients of ``seed . output`` for every row of X; (n, d)."""
    A = np.asarray(X, dtype=float)
    acts = [A]
    zs = []
    for lay in net.layers:
        Z = acts[-1] @ lay.weights.T + lay.bias
        zs.append(Z)
        acts.append(_act(Z, lay.powers))
    if seed is None:
        if net.output_dim != 1:
            raise ValueError("seed vector required for vector-output nets")
        seed = np.ones(1)
    Delta = np.broadcast_to(np.asarray(seed, float), (A.shape[0], net.output_dim)).copy()
    for k in range(len(net.layers) - 1, -1, -1):
        lay = net.layers[k]
        Dz = Delta * _act_prime(zs[k], lay.powers)
        Delta = Dz @ lay.weights
    return Delta


def architecture_stats(net: MixedRepuNetwork) -> ArchitectureStats:
    hidden = net.hidden_widths
    depth = len(hidden)
    width = max(hidden) if hidden else 0
    neurons = int(sum(hidden))
    size = int(sum(lay.d_out * (lay.d_in + 1) for lay in net.layers))
    return ArchitectureStats(depth=depth, width=width, neurons=neurons, size=size)


def nonzero_param_count(net: MixedRepuNetwork) -> int:
    """Number of structurally nonzero weights and biases.

    The derivative-network size bound counts stored parameters the way the
    transformation lays them out, which for block-sparse constructions is
    far below the dense ``sum d_{i+1}(d_i+1)`` total.
    """
    return int(
        sum(np.count_nonzero(lay.weights) + np.count_nonzero(lay.bias) for lay in net.layers)
    )


def pdim_bound(depth, size, neurons, p) -> float:
    """Pseudo-dimension bound 3 p D S (D + log2 U) for mixed-power nets."""
    for name, v in (("depth", depth), ("size", size), ("neurons", neurons), ("p", p)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    return 3.0 * p * depth * size * (depth + math.log2(neurons))


def random_network(
    rng, d_in: int, hidden_widths, p: int, d_out: int = 1, scale: float | None = None
):
    """Random net with uniform hidden power p.

    Weights are uniform on +/- sqrt(6 / (d_in + d_out)) * c_p with c_p = 1/p,
    damping the power-amplification of sigma_p; biases start at zero.
    """
    layers = []
    dims = [d_in] + list(hidden_widths) + [d_out]
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        lim = math.sqrt(6.0 / (fan_in + fan_out)) * (scale if scale is not None else 1.0 / p)
        W = rng.uniform(-lim, lim, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        powers = np.full(fan_out, p if k < len(dims) - 2 else 0, dtype=int)
        layers.append(Layer(W, b, powers))
    return MixedRepuNetwork(tuple(layers))


_FORMAT_VERSION = 1


def serialize(net: MixedRepuNetwork) -> str:
    """Versioned text form: per layer, powers, bias and row-major weights."""
    buf = io.StringIO()
    buf.write(f"format_version: {_FORMAT_VERSION}\n")
    buf.write(f"input_dim: {net.input_dim}\n")
    buf.write(f"num_layers: {len(net.layers)}\n")
    for k, lay in enumerate(net.layers):
        buf.write(f"layer: {k} in: {lay.d_in} out: {lay.d_out}\n")
        buf.write("powers: " + " ".join(str(int(t)) for t in lay.powers) + "\n")
        buf.write("bias: " + " ".join(repr(float(v)) for v in lay.bias) + "\n")
        for row in lay.weights:
            buf.write("w: " + " ".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


class NetworkFormatError(ValueError):
    pass


def _expect(line: str | None, prefix: str, where: str) -> str:
    if line is None or not line.startswith(prefix):
        raise NetworkFormatError(f"{where}: expected '{prefix}', got {line!r}")
    return line[len(prefix):].strip()


def deserialize(text: str | bytes) -> MixedRepuNetwork:
    """Inverse of :func:`serialize`; malformed input is reported with the
    offending layer index, and non-finite weights are rejected."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = iter([ln for ln in text.splitlines() if ln.strip()])

    def nxt():
        return next(lines, None)

    version = _expect(nxt(), "format_version:", "header")
    if int(version) != _FORMAT_VERSION:
        raise NetworkFormatError(f"unsupported format_version {version}")
    d_in_net = int(_expect(nxt(), "input_dim:", "header"))
    n_layers = int(_expect(nxt(), "num_layers:", "header"))
    if n_layers < 1:
        raise NetworkFormatError("network file declares no layers")
    layers = []
    for k in range(n_layers):
        where = f"layer {k}"
        head = _expect(nxt(), "layer:", where).split()
        if len(head) != 5 or int(head[0]) != k:
            raise NetworkFormatError(f"{where}: bad layer header {head}")
        d_in, d_out = int(head[2]), int(head[4])
        if d_in < 1 or d_out < 1:
            raise NetworkFormatError(f"{where}: empty layer ({d_in} -> {d_out})")
        powers = np.array([int(v) for v in _expect(nxt(), "powers:", where).split()])
        bias = np.array([float(v) for v in _expect(nxt(), "bias:", where).split()])
        if powers.shape != (d_out,) or bias.shape != (d_out,):
            raise NetworkFormatError(f"{where}: powers/bias length != {d_out}")
        rows = []
        for _ in range(d_out):
            rows.append([float(v) for v in _expect(nxt(), "w:", where).split()])
            if len(rows[-1]) != d_in:
                raise NetworkFormatError(f"{where}: weight row length != {d_in}")
        W = np.array(rows)
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(bias))):
            raise NetworkFormatError(f"{where}: non-finite weight or bias")
        layers.append(Layer(W, bias, powers))
    net = MixedRepuNetwork(tuple(layers))
    if net.input_dim != d_in_net:
        raise NetworkFormatError("declared input_dim does not match first layer")
    return net
