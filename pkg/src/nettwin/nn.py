"""Small hand-written neural network core on numpy.

Layers keep the input of their last forward pass and implement ``backward``
explicitly; there is no autodiff graph.  Parameter gradients are *accumulated*
into ``layer.grads`` so a caller can sum several loss terms before an
optimizer step (call ``zero_grad`` in between steps).

Arrays are float32 by default.  ``Sequential.astype(np.float64)`` produces a
double-precision copy, which the finite-difference gradient checks rely on.
"""

from __future__ import annotations

import copy
import os

import numpy as np

CHECK_FINITE = bool(os.environ.get("NETTWIN_DEBUG"))
COL_BUDGET = 4_000_000  # im2col elements per chunk


def _check(x: np.ndarray, where: str) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values after {where}")
    return x


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def zero_grad(self):
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)

    def fan_in(self) -> int | None:
        return None

    def _cached(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called without a cached forward pass")
        return self._cache


class Conv2d(Layer):
    """Valid-padding cross-correlation over (N, C, H, W) input."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int | tuple[int, int], stride: int = 1,
                 dtype=np.float32):
        super().__init__()
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride = (kh, kw), stride
        self.params = {"weight": np.zeros((out_channels, in_channels, kh, kw), dtype),
                       "bias": np.zeros(out_channels, dtype)}
        self.zero_grad()

    def fan_in(self):
        kh, kw = self.kernel
        return self.in_channels * kh * kw

    def output_shape(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        return (h - kh) // self.stride + 1, (w - kw) // self.stride + 1

    def _cols(self, x: np.ndarray) -> np.ndarray:
        """im2col: (N, C, H, W) -> (N, Ho, Wo, C*kh*kw)."""
        kh, kw = self.kernel
        s = self.stride
        win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
        n, c, ho, wo = win.shape[:4]
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho, wo, c * kh * kw)

    def _chunks(self, n: int, h: int, w: int):
        kh, kw = self.kernel
        ho, wo = self.output_shape(h, w)
        per_sample = ho * wo * self.in_channels * kh * kw
        step = max(1, COL_BUDGET // per_sample)
        return [(a, min(a + step, n)) for a in range(0, n, step)]

    def forward(self, x: np.ndarray) -> np.ndarray:
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        n, c, h, w = x.shape
        kh, kw = self.kernel
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {c}")
        if h < kh or w < kw:
            raise ValueError(f"input {h}x{w} smaller than kernel {kh}x{kw}")
        ho, wo = self.output_shape(h, w)
        wmat = self.params["weight"].reshape(self.out_channels, -1)
        out = np.empty((n, ho, wo, self.out_channels), dtype=wmat.dtype)
        for a, b in self._chunks(n, h, w):
            out[a:b] = self._cols(x[a:b]) @ wmat.T
        out += self.params["bias"]
        out = out.transpose(0, 3, 1, 2)
        self._cache = (x, squeeze)
        return _check(out[0] if squeeze else out, "conv2d")

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x, squeeze = self._cached()
        if squeeze:
            grad = grad[None]
        n, c, h, w = x.shape
        kh, kw = self.kernel
        ho, wo = grad.shape[2:]
        s = self.stride
        wmat = self.params["weight"].reshape(self.out_channels, -1)
        g = grad.transpose(0, 2, 3, 1)  # (N, Ho, Wo, O)
        dw = np.zeros_like(wmat)
        dx = np.zeros_like(x)
        for a, b in self._chunks(n, h, w):
            gc = g[a:b].reshape(-1, self.out_channels)
            dw += gc.T @ self._cols(x[a:b]).reshape(gc.shape[0], -1)
            dcols = (gc @ wmat).reshape(b - a, ho, wo, c, kh, kw)
            for i in range(kh):
                for j in range(kw):
                    dx[a:b, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        self.grads["weight"] += dw.reshape(self.params["weight"].shape)
        self.grads["bias"] += grad.sum(axis=(0, 2, 3))
        return dx[0] if squeeze else dx


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, dtype=np.float32):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.params = {"weight": np.zeros((in_dim, out_dim), dtype), "bias": np.zeros(out_dim, dtype)}
        self.zero_grad()

    def fan_in(self):
        return self.in_dim

    def forward(self, x):
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected last dim {self.in_dim}, got {x.shape[-1]}")
        self._cache = x
        return _check(x @ self.params["weight"] + self.params["bias"], "dense")

    def backward(self, grad):
        x = self._cached()
        x2 = x.reshape(-1, self.in_dim)
        g2 = grad.reshape(-1, self.out_dim)
        self.grads["weight"] += x2.T @ g2
        self.grads["bias"] += g2.sum(axis=0)
        return grad @ self.params["weight"].T


class ReLU(Layer):
    def forward(self, x):
        self._cache = x > 0
        return np.where(self._cache, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return np.where(self._cached(), grad, 0).astype(grad.dtype, copy=False)


class Flatten(Layer):
    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cached())


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        """Parameters in a fixed order, named ``<layer index>.<kind>``."""
        out = []
        for i, layer in enumerate(self.layers):
            for k in sorted(layer.params):
                out.append((f"{i}.{k}", layer.params[k]))
        return out

    def parameters(self) -> list[np.ndarray]:
        return [p for _, p in self.named_parameters()]

    def gradients(self) -> list[np.ndarray]:
        return [layer.grads[k] for layer in self.layers for k in sorted(layer.params)]

    def astype(self, dtype) -> "Sequential":
        twin = copy.deepcopy(self)
        for layer in twin.layers:
            layer._cache = None
            for k in layer.params:
                layer.params[k] = layer.params[k].astype(dtype)
            layer.zero_grad()
        return twin

    def load_parameters(self, values: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ValueError("parameter count mismatch")
        for p, v in zip(params, values):
            if p.shape != v.shape:
                raise ValueError(f"shape mismatch {p.shape} vs {v.shape}")
            p[...] = v


def init_params(rng: np.random.Generator, net: Sequential) -> Sequential:
    """He-uniform weights (variance 2 / fan_in), zero biases; in place."""
    for layer in net.layers:
        fan_in = layer.fan_in()
        if fan_in is None:
            continue
        w = layer.params["weight"]
        bound = np.sqrt(6.0 / fan_in)
        w[...] = rng.uniform(-bound, bound, size=w.shape)
        layer.params["bias"][...] = 0
    return net


def visual_encoder(in_channels: int = 3, image_size: int = 96, hidden: int = 128,
                   dtype=np.float32) -> list[Layer]:
    """Two conv layers (16@8x8/4, 32@4x4/2) then a dense projection, all ReLU."""
    c1 = Conv2d(in_channels, 16, 8, 4, dtype)
    h1 = c1.output_shape(image_size, image_size)
    c2 = Conv2d(16, 32, 4, 2, dtype)
    h2 = c2.output_shape(*h1)
    return [c1, ReLU(), c2, ReLU(), Flatten(), Dense(32 * h2[0] * h2[1], hidden, dtype), ReLU()]


def mlp(sizes: list[int], final_activation: bool = False, dtype=np.float32) -> list[Layer]:
    layers: list[Layer] = []
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(Dense(a, b, dtype))
        if k < len(sizes) - 2 or final_activation:
            layers.append(ReLU())
    return layers


# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


class AdamState:
    def __init__(self, params: list[np.ndarray], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update, applied in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p -= step.astype(p.dtype, copy=False)
