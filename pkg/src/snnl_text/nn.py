"""Small dense/1-D convolutional networks with exact backpropagation and Adam.

A :class:`Network` is an ordered list of layers. ``forward`` keeps every
layer's input, pre-activation and output so that ``backward`` can inject
extra loss gradients (e.g. soft nearest neighbor terms) at hidden layers.

Checkpoint format (little-endian)::

    b"NNW1" | u32 n_layers | per layer:
        u8 type (0 dense, 1 conv1d) | shape u32s | u8 activation | f64 params

Dense shape is ``(fan_in, fan_out)``; conv1d shape is
``(out_channels, in_channels, kernel_width, stride, input_length)``.
Parameters are written weights first, then bias.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LOG_FLOOR = 1e-30
ACTIVATIONS = ("identity", "relu", "logistic", "softmax")
CHECKPOINT_MAGIC = b"NNW1"


def _activate(z, kind):
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "logistic":
        # split by sign so exp never overflows
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "softmax":
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_backward(grad_a, z, a, kind):
    """Gradient at the pre-activation given the gradient at the output."""
    if kind == "identity":
        return grad_a
    if kind == "relu":
        return grad_a * (z > 0)
    if kind == "logistic":
        return grad_a * a * (1 - a)
    if kind == "softmax":
        return a * (grad_a - np.einsum("ij,ij->i", grad_a, a)[:, None])
    raise ValueError(f"unknown activation {kind!r}")


def kaiming_init(fan_in, fan_out, rng, shape=None):
    """Normal(0, sqrt(2 / fan_in)) weights."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape or (fan_in, fan_out))


def xavier_init(fan_in, fan_out, rng, shape=None):
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


_INITIALIZERS = {"kaiming": kaiming_init, "xavier": xavier_init}


class DenseLayer:
    kind = "dense"

    def __init__(self, weights, bias, activation="identity"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weights = weights
        self.bias = bias
        self.activation = activation

    @classmethod
    def create(cls, fan_in, fan_out, activation, init, rng, dtype=np.float64):
        w = _INITIALIZERS[init](fan_in, fan_out, rng).astype(dtype)
        return cls(w, np.zeros(fan_out, dtype=dtype), activation)

    @property
    def in_features(self):
        return self.weights.shape[0]

    @property
    def out_features(self):
        return self.weights.shape[1]

    @property
    def params(self):
        return [self.weights, self.bias]

    def preactivate(self, x):
        return x @ self.weights + self.bias

    def backward(self, x, delta):
        return delta @ self.weights.T, [x.T @ delta, delta.sum(axis=0)]


class Conv1dLayer:
    """1-D convolution over inputs laid out as ``(batch, in_channels * length)``.

    Outputs are flattened channel-major to ``(batch, out_channels * out_length)``.
    """

    kind = "conv1d"

    def __init__(self, kernels, bias, input_length, stride=1, activation="relu"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if stride < 1:
            raise ValueError("stride must be positive")
        self.kernels = kernels
        self.bias = bias
        self.input_length = int(input_length)
        self.stride = int(stride)
        self.activation = activation
        if self.output_length < 1:
            raise ValueError(
                f"kernel width {self.kernel_width} exceeds input length {input_length}"
            )

    @classmethod
    def create(cls, input_length, in_channels, out_channels, kernel_width, stride,
               activation, rng, dtype=np.float64):
        fan_in = in_channels * kernel_width
        if kernel_width > input_length:
            raise ValueError(
                f"kernel width {kernel_width} exceeds input length {input_length}"
            )
        k = kaiming_init(fan_in, None, rng, shape=(out_channels, in_channels, kernel_width))
        return cls(k.astype(dtype), np.zeros(out_channels, dtype=dtype),
                   input_length, stride, activation)

    @property
    def out_channels(self):
        return self.kernels.shape[0]

    @property
    def in_channels(self):
        return self.kernels.shape[1]

    @property
    def kernel_width(self):
        return self.kernels.shape[2]

    @property
    def output_length(self):
        return (self.input_length - self.kernel_width) // self.stride + 1

    @property
    def in_features(self):
        return self.in_channels * self.input_length

    @property
    def out_features(self):
        return self.out_channels * self.output_length

    @property
    def params(self):
        return [self.kernels, self.bias]

    def _windows(self, x):
        x = x.reshape(x.shape[0], self.in_channels, self.input_length)
        win = np.lib.stride_tricks.sliding_window_view(x, self.kernel_width, axis=2)
        return win[:, :, :: self.stride, :]

    def preactivate(self, x):
        z = np.einsum("bclw,ocw->bol", self._windows(x), self.kernels, optimize=True)
        z += self.bias[None, :, None]
        return z.reshape(x.shape[0], -1)

    def backward(self, x, delta):
        n = x.shape[0]
        delta = delta.reshape(n, self.out_channels, self.output_length)
        grad_k = np.einsum("bol,bclw->ocw", delta, self._windows(x), optimize=True)
        grad_b = delta.sum(axis=(0, 2))
        dx = np.zeros((n, self.in_channels, self.input_length), dtype=delta.dtype)
        span = self.stride * (self.output_length - 1) + 1
        for w in range(self.kernel_width):
            contrib = np.einsum("bol,oc->bcl", delta, self.kernels[:, :, w])
            dx[:, :, w : w + span : self.stride] += contrib
        return dx.reshape(n, -1), [grad_k, grad_b]


@dataclass
class Network:
    """Layers plus the SNNL tap points.

    ``taps`` maps a tap name to ``(layer_index, width)``; ``width`` ``None``
    taps the whole layer output, an integer taps its first ``width`` units.
    """

    layers: list
    taps: dict = field(default_factory=dict)
    encoder_depth: int = None

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params))

    @property
    def dtype(self):
        return self.layers[0].params[0].dtype

    @property
    def in_features(self):
        return self.layers[0].in_features

    @property
    def out_features(self):
        return self.layers[-1].out_features


@dataclass
class ForwardRecord:
    inputs: list
    preacts: list
    outputs: list

    def tap_output(self, layer, width=None):
        out = self.outputs[layer]
        return out if width is None else out[:, :width]


def forward(network, X, stop=None):
    """Run ``X`` through ``network`` (or its first ``stop`` layers).

    Returns ``(output, record)``.
    """
    layers = network.layers if stop is None else network.layers[:stop]
    h = np.asarray(X, dtype=network.dtype)
    if h.ndim != 2:
        raise ValueError(f"input must be 2-D, got shape {h.shape}")
    record = ForwardRecord([], [], [])
    for i, layer in enumerate(layers):
        if h.shape[1] != layer.in_features:
            raise ValueError(
                f"layer {i} expects {layer.in_features} inputs, got {h.shape[1]}"
            )
        z = layer.preactivate(h)
        a = _activate(z, layer.activation)
        record.inputs.append(h)
        record.preacts.append(z)
        record.outputs.append(a)
        h = a
    return h, record


def backward(network, record, grad_output=None, delta_output=None, tap_grads=None):
    """Parameter gradients of a loss defined on the output and tapped layers.

    Give the output-layer gradient either with respect to the layer's output
    (``grad_output``) or its pre-activation (``delta_output``, the fused form
    for softmax/cross-entropy and logistic/BCE). ``tap_grads`` maps a layer
    index to the gradient with respect to that layer's output; narrower
    arrays apply to the leading units. Returns one gradient per entry of
    ``network.params``.
    """
    if record is None or len(record.outputs) != len(network.layers):
        raise ValueError("backward needs the forward record of the full network")
    if (grad_output is None) == (delta_output is None):
        raise ValueError("pass exactly one of grad_output and delta_output")
    tap_grads = tap_grads or {}
    grads = [None] * len(network.layers)
    last = len(network.layers) - 1
    grad_a = None
    for i in range(last, -1, -1):
        layer = network.layers[i]
        if i == last and delta_output is not None:
            delta = np.asarray(delta_output, dtype=network.dtype)
        else:
            if i == last:
                grad_a = np.asarray(grad_output, dtype=network.dtype)
            if i in tap_grads:
                extra = tap_grads[i]
                if extra.shape[1] == grad_a.shape[1]:
                    grad_a = grad_a + extra
                else:
                    grad_a = grad_a.copy()
                    grad_a[:, : extra.shape[1]] += extra
            delta = _activation_backward(
                grad_a, record.preacts[i], record.outputs[i], layer.activation
            )
        grad_a, grads[i] = layer.backward(record.inputs[i], delta)
    return [g for layer_grads in grads for g in layer_grads]


def cross_entropy(y, p):
    """Mean over the batch of ``-sum(y * log p)`` with logs floored."""
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError(f"shape mismatch: targets {y.shape}, predictions {p.shape}")
    return float(-(y * np.log(np.maximum(p, LOG_FLOOR))).sum(axis=1).mean())


def cross_entropy_delta(y, p):
    """Softmax/cross-entropy gradient at the logits: ``(p - y) / batch``."""
    return (p - y) / y.shape[0]


def binary_cross_entropy(x, r):
    """Mean over examples of the per-dimension summed binary cross-entropy."""
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if x.shape != r.shape:
        raise ValueError(f"shape mismatch: targets {x.shape}, reconstructions {r.shape}")
    if x.size and (x.min() < 0 or x.max() > 1):
        raise ValueError("binary cross-entropy targets must lie in [0, 1]; scale them first")
    per_dim = -(x * np.log(np.maximum(r, LOG_FLOOR))
                + (1 - x) * np.log(np.maximum(1 - r, LOG_FLOOR)))
    return float(per_dim.sum(axis=1).mean())


def binary_cross_entropy_delta(x, r):
    """Logistic/BCE gradient at the output pre-activation: ``(r - x) / batch``."""
    return (r - x) / x.shape[0]


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **hyper):
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params], **hyper)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


_ACT_TAG = {name: i for i, name in enumerate(ACTIVATIONS)}


def save_network(path, network):
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(network.layers))]
    for layer in network.layers:
        if isinstance(layer, DenseLayer):
            chunks.append(struct.pack("<BII", 0, *layer.weights.shape))
        else:
            chunks.append(struct.pack(
                "<BIIIII", 1, *layer.kernels.shape, layer.stride, layer.input_length))
        chunks.append(struct.pack("<B", _ACT_TAG[layer.activation]))
        for p in layer.params:
            chunks.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_network(path, dtype=np.float64):
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    (count,) = struct.unpack_from("<I", raw, 4)
    off = 8
    layers = []

    def take(shape):
        nonlocal off
        size = int(np.prod(shape))
        arr = np.frombuffer(raw, "<f8", size, off).reshape(shape).astype(dtype)
        off += 8 * size
        return arr

    for _ in range(count):
        (tag,) = struct.unpack_from("<B", raw, off)
        off += 1
        if tag == 0:
            fan_in, fan_out = struct.unpack_from("<II", raw, off)
            off += 8
            (act,) = struct.unpack_from("<B", raw, off)
            off += 1
            w = take((fan_in, fan_out))
            layers.append(DenseLayer(w, take((fan_out,)), ACTIVATIONS[act]))
        elif tag == 1:
            out_c, in_c, width, stride, length = struct.unpack_from("<IIIII", raw, off)
            off += 20
            (act,) = struct.unpack_from("<B", raw, off)
            off += 1
            k = take((out_c, in_c, width))
            layers.append(Conv1dLayer(k, take((out_c,)), length, stride, ACTIVATIONS[act]))
        else:
            raise ValueError(f"{path}: unknown layer type {tag}")
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes after {count} layers")
    return Network(layers)
