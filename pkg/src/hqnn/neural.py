"""Small numpy deep-learning kernel: conv/pool/dense layers with backprop and Adam.

Everything works on float64 batches. Images are NCHW, dense activations are
``(N, features)``. Layers cache what their backward pass needs during
``forward``; call ``backward`` once per ``forward``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("conv2d", "maxpool2d", "dense", "relu", "tanh", "flatten")


# -- functional kernels ------------------------------------------------------


def _windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """(N, C, Ho, Wo, K, K) view of all receptive fields."""
    return sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]


def conv_output_size(size: int, kernel: int, stride: int = 1) -> int:
    return (size - kernel) // stride + 1


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    """Valid-padding cross-correlation. ``weights`` is ``(F, C, K, K)``."""
    if x.ndim != 4 or weights.ndim != 4:
        raise ValueError(f"conv2d expects NCHW input and FCKK weights, got {x.shape} and {weights.shape}")
    n, c, h, w = x.shape
    f, wc, k, k2 = weights.shape
    if wc != c or k != k2:
        raise ValueError(f"weights {weights.shape} do not fit input with {c} channels")
    if h < k or w < k:
        raise ValueError(f"input {h}x{w} smaller than kernel {k}")
    if stride < 1:
        raise ValueError("stride must be positive")
    out = np.tensordot(_windows(x, k, stride), weights, axes=([1, 4, 5], [1, 2, 3]))
    return out.transpose(0, 3, 1, 2) + bias[None, :, None, None]


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, weights: np.ndarray, stride: int = 1):
    """Returns ``(grad_input, grad_weights, grad_bias)``."""
    f, c, k, _ = weights.shape
    n, _, ho, wo = grad_out.shape
    if grad_out.shape[1] != f or (ho, wo) != (conv_output_size(x.shape[2], k, stride),
                                             conv_output_size(x.shape[3], k, stride)):
        raise ValueError(f"grad_out {grad_out.shape} inconsistent with input {x.shape}")
    grad_w = np.tensordot(grad_out, _windows(x, k, stride), axes=([0, 2, 3], [0, 2, 3]))
    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_x = np.zeros_like(x)
    for i in range(k):
        for j in range(k):
            contrib = np.tensordot(grad_out, weights[:, :, i, j], axes=([1], [0]))  # N, Ho, Wo, C
            grad_x[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contrib.transpose(0, 3, 1, 2)
    return grad_x, grad_w, grad_b


def maxpool2x2_forward(x: np.ndarray):
    """2x2/stride-2 max pooling. Returns the output and the per-window argmax."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)  # first occurrence wins ties
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2x2_backward(grad_out: np.ndarray, arg: np.ndarray) -> np.ndarray:
    n, c, ho, wo = grad_out.shape
    blocks = np.zeros((n, c, ho, wo, 4))
    np.put_along_axis(blocks, arg[..., None], grad_out[..., None], axis=-1)
    return blocks.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map; ``weights`` is ``(in, out)``."""
    if x.shape[-1] != weights.shape[0]:
        raise ValueError(f"dense input width {x.shape[-1]} != weight rows {weights.shape[0]}")
    return x @ weights + bias


def dense_backward(grad_out: np.ndarray, x: np.ndarray, weights: np.ndarray):
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def tanh_forward(x):
    return np.tanh(x)


def tanh_backward(grad_out, y):
    return grad_out * (1.0 - y * y)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels):
    """Mean cross-entropy of ``softmax(logits)`` and its gradient w.r.t. the logits.

    Accepts a single logit vector with an int label, or an ``(N, K)`` batch with
    ``N`` labels (the loss and gradient are then averaged over the batch).
    """
    single = logits.ndim == 1
    logits2 = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, k = logits2.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"label out of range for {k} classes")
    z = logits2 - logits2.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = softmax(logits2)
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, (grad[0] if single else grad)


# -- layers ------------------------------------------------------------------


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def config(self) -> dict[str, Any]:
        return {"kind": self.kind}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1, rng=None):
        super().__init__()
        if kernel < 1 or stride < 1:
            raise ValueError("kernel and stride must be positive")
        self.in_channels, self.out_channels, self.kernel, self.stride = in_channels, out_channels, kernel, stride
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * kernel * kernel
        self.params["w"] = _uniform_init(rng, (out_channels, in_channels, kernel, kernel), fan_in)
        self.params["b"] = _uniform_init(rng, (out_channels,), fan_in)

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ValueError(f"conv2d expects {self.in_channels} channels, got {c}")
        if h < self.kernel or w < self.kernel:
            raise ValueError(f"input {h}x{w} smaller than kernel {self.kernel}")
        return (self.out_channels, conv_output_size(h, self.kernel, self.stride),
                conv_output_size(w, self.kernel, self.stride))

    def config(self):
        return {"kind": self.kind, "out_channels": self.out_channels, "kernel": self.kernel, "stride": self.stride}

    def forward(self, x):
        self._x = x
        return conv2d_forward(x, self.params["w"], self.params["b"], self.stride)

    def backward(self, grad):
        gx, gw, gb = conv2d_backward(grad, self._x, self.params["w"], self.stride)
        self.grads["w"], self.grads["b"] = gw, gb
        return gx


class MaxPool2d(Layer):
    kind = "maxpool2d"

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool2d needs even spatial dims, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x):
        out, self._arg = maxpool2x2_forward(x)
        return out

    def backward(self, grad):
        return maxpool2x2_backward(grad, self._arg)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, units: int, rng=None):
        super().__init__()
        self.in_features, self.units = in_features, units
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["w"] = _uniform_init(rng, (in_features, units), in_features)
        self.params["b"] = _uniform_init(rng, (units,), in_features)

    def output_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ValueError(f"dense expects ({self.in_features},) input, got {in_shape}")
        return (self.units,)

    def config(self):
        return {"kind": self.kind, "units": self.units}

    def forward(self, x):
        self._x = x
        return dense_forward(x, self.params["w"], self.params["b"])

    def backward(self, grad):
        gx, gw, gb = dense_backward(grad, self._x, self.params["w"])
        self.grads["w"], self.grads["b"] = gw, gb
        return gx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._x = x
        return relu_forward(x)

    def backward(self, grad):
        return relu_backward(grad, self._x)


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x):
        self._y = tanh_forward(x)
        return self._y

    def backward(self, grad):
        return tanh_backward(grad, self._y)


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


def make_layer(spec: dict, in_shape: tuple[int, ...], rng: np.random.Generator) -> Layer:
    kind = spec.get("kind")
    if kind == "conv2d":
        return Conv2d(in_shape[0], int(spec["out_channels"]), int(spec["kernel"]), int(spec.get("stride", 1)), rng)
    if kind == "dense":
        if len(in_shape) != 1:
            raise ValueError(f"dense layer needs flat input, got shape {in_shape}; add a flatten layer")
        return Dense(in_shape[0], int(spec["units"]), rng)
    simple = {"maxpool2d": MaxPool2d, "relu": ReLU, "tanh": Tanh, "flatten": Flatten}
    if kind not in simple:
        raise ValueError(f"unknown layer kind {kind!r}; expected one of {LAYER_KINDS}")
    return simple[kind]()


class Sequential:
    """Ordered stack of layers built from plain-dict layer specs."""

    def __init__(self, specs: list[dict], in_shape: tuple[int, ...], rng: np.random.Generator):
        self.in_shape = tuple(in_shape)
        self.layers: list[Layer] = []
        shape = self.in_shape
        for spec in specs:
            layer = make_layer(spec, shape, rng)
            shape = layer.output_shape(shape)
            self.layers.append(layer)
        self.out_shape = shape

    def config(self) -> list[dict]:
        return [layer.config() for layer in self.layers]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {f"{prefix}{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def named_grads(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {f"{prefix}{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}


# -- optimizer ---------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.0002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return state
