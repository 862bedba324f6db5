"""Feedforward layers with hand-derived backward passes.

Every layer works on float64 numpy arrays. ``forward`` caches whatever the
matching ``backward`` needs; ``backward`` consumes the most recent cache,
fills ``grads`` for trainable layers and returns the gradient w.r.t. the
layer input. Single-threaded use: one forward, then at most one backward.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


class Dense:
    """Affine map ``y = x @ W + b`` on flat inputs of shape (batch, in)."""

    def __init__(self, in_features: int, out_features: int):
        if in_features < 1 or out_features < 1:
            raise ConfigError(
                f"dense layer needs positive sizes, got {in_features}x{out_features}"
            )
        self.in_features = in_features
        self.out_features = out_features
        self.params = {"W": np.zeros((in_features, out_features)), "b": np.zeros(out_features)}
        self.grads = {}
        self._x = None

    @property
    def name(self) -> str:
        return f"dense({self.in_features}->{self.out_features})"

    def init_params(self, rng: np.random.Generator) -> None:
        # He-normal fan-in scaling, the usual choice ahead of ReLU.
        std = np.sqrt(2.0 / self.in_features)
        self.params["W"] = rng.normal(0.0, std, size=(self.in_features, self.out_features))
        self.params["b"] = np.zeros(self.out_features)

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(input_shape) != 1 or input_shape[0] != self.in_features:
            raise ConfigError(
                f"{self.name} expects flat input of width {self.in_features}, "
                f"got shape {input_shape}"
            )
        return (self.out_features,)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        self.grads["W"] = self._x.T @ grad
        self.grads["b"] = grad.sum(axis=0)
        return grad @ self.params["W"].T


class Conv2d:
    """2-D convolution on (batch, channels, height, width) inputs.

    Implemented via im2col so both passes reduce to matrix products.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, pad: int = 0):
        if min(in_channels, out_channels, kernel, stride) < 1 or pad < 0:
            raise ConfigError(
                f"conv layer needs positive channels/kernel/stride and pad >= 0, got "
                f"in={in_channels} out={out_channels} k={kernel} stride={stride} pad={pad}"
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.params = {
            "W": np.zeros((out_channels, in_channels, kernel, kernel)),
            "b": np.zeros(out_channels),
        }
        self.grads = {}
        self._cache = None

    @property
    def name(self) -> str:
        return f"conv({self.in_channels}->{self.out_channels},k{self.kernel})"

    def init_params(self, rng: np.random.Generator) -> None:
        fan_in = self.in_channels * self.kernel * self.kernel
        std = np.sqrt(2.0 / fan_in)
        self.params["W"] = rng.normal(0.0, std, size=self.params["W"].shape)
        self.params["b"] = np.zeros(self.out_channels)

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(input_shape) != 3 or input_shape[0] != self.in_channels:
            raise ConfigError(
                f"{self.name} expects (channels={self.in_channels}, h, w) input, "
                f"got shape {input_shape}"
            )
        _, h, w = input_shape
        oh = (h + 2 * self.pad - self.kernel) // self.stride + 1
        ow = (w + 2 * self.pad - self.kernel) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ConfigError(f"{self.name} kernel does not fit input {input_shape}")
        return (self.out_channels, oh, ow)

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        b, c, h, w = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        oh = (h + 2 * p - k) // s + 1
        ow = (w + 2 * p - k) // s + 1
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        cols = np.empty((b, c, k, k, oh, ow))
        for i in range(k):
            for j in range(k):
                cols[:, :, i, j] = xp[:, :, i:i + s * oh:s, j:j + s * ow:s]
        return cols.reshape(b, c * k * k, oh * ow)

    def _col2im(self, cols: np.ndarray, x_shape: tuple[int, ...]) -> np.ndarray:
        b, c, h, w = x_shape
        k, s, p = self.kernel, self.stride, self.pad
        oh = (h + 2 * p - k) // s + 1
        ow = (w + 2 * p - k) // s + 1
        cols = cols.reshape(b, c, k, k, oh, ow)
        xp = np.zeros((b, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                xp[:, :, i:i + s * oh:s, j:j + s * ow:s] += cols[:, :, i, j]
        return xp[:, :, p:p + h, p:p + w]

    def forward(self, x: np.ndarray) -> np.ndarray:
        b = x.shape[0]
        _, oh, ow = self.output_shape(x.shape[1:])
        cols = self._im2col(x)
        w_mat = self.params["W"].reshape(self.out_channels, -1)
        out = np.einsum("fk,bkp->bfp", w_mat, cols)
        out = out.reshape(b, self.out_channels, oh, ow) + self.params["b"][None, :, None, None]
        self._cache = (x.shape, cols)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x_shape, cols = self._cache
        b = grad.shape[0]
        g = grad.reshape(b, self.out_channels, -1)
        w_mat = self.params["W"].reshape(self.out_channels, -1)
        self.grads["W"] = np.einsum("bfp,bkp->fk", g, cols).reshape(self.params["W"].shape)
        self.grads["b"] = g.sum(axis=(0, 2))
        dcols = np.einsum("fk,bfp->bkp", w_mat, g)
        return self._col2im(dcols, x_shape)


class ReLU:
    """Elementwise ``max(0, x)``; a probe point in every architecture."""

    params: dict = {}
    grads: dict = {}
    name = "relu"

    def __init__(self):
        self._mask = None

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad * self._mask


class Flatten:
    """Collapse all non-batch axes into one."""

    params: dict = {}
    grads: dict = {}
    name = "flatten"

    def __init__(self):
        self._shape = None

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return (int(np.prod(input_shape)),)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad.reshape(self._shape)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted for overflow safety."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of integer ``labels`` under softmax(logits)."""
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(labels)), labels]))
