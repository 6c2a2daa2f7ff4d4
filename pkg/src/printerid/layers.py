"""From-scratch CNN layers (forward + exact backward), NHWC layout.

Convolution is valid cross-correlation (stride 1) computed through an
im2col gather and one matmul; the naive quadruple-loop reference lives
in the test suite as an independent oracle. Training runs in float32;
layers accept dtype=float64 for finite-difference gradient checking.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateBatchError, InputShapeError

ACTIVATIONS = ("relu", "tanh", "elu", "prelu")
POOLS = ("max", "avg")


class Parameter:
    """A trainable array with its gradient accumulator."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def size(self) -> int:
        return self.value.size


class Layer:
    """Minimal layer interface; stateless layers keep params() empty."""

    def params(self) -> list[Parameter]:
        return []

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _he_uniform(shape, fan_in, gen, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return gen.uniform(-limit, limit, size=shape).astype(dtype)


def _xavier_uniform(shape, fan_in, fan_out, gen, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return gen.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D(Layer):
    """Valid 2-D cross-correlation, kernel KxK, stride 1, bias per filter."""

    def __init__(self, in_channels, out_channels, kernel_size=3,
                 gen: np.random.Generator | None = None, init="he", dtype=np.float32):
        k = kernel_size
        shape = (k, k, in_channels, out_channels)
        fan_in = k * k * in_channels
        fan_out = k * k * out_channels
        if gen is None:
            w = np.zeros(shape, dtype=dtype)
        elif init == "xavier":
            w = _xavier_uniform(shape, fan_in, fan_out, gen, dtype)
        else:
            w = _he_uniform(shape, fan_in, gen, dtype)
        self.kernel_size = k
        self.weights = Parameter("conv.weights", w)
        self.bias = Parameter("conv.bias", np.zeros(out_channels, dtype=dtype))
        self._cols = None
        self._x_shape = None

    def params(self):
        return [self.weights, self.bias]

    def _im2col(self, x):
        k = self.kernel_size
        n, h, w, c = x.shape
        oh, ow = h - k + 1, w - k + 1
        # Gather as k*k cheap slice copies; axis order (ki, kj, c) matches
        # the flattened weight layout.
        cols = np.empty((n, oh, ow, k, k, c), dtype=x.dtype)
        for ki in range(k):
            for kj in range(k):
                cols[:, :, :, ki, kj, :] = x[:, ki : ki + oh, kj : kj + ow, :]
        return cols

    def forward(self, x, train=False):
        k = self.kernel_size
        n, h, w, c = x.shape
        if h < k or w < k:
            raise InputShapeError(f"input {h}x{w} smaller than {k}x{k} kernel")
        if c != self.weights.value.shape[2]:
            raise InputShapeError(f"expected {self.weights.value.shape[2]} input channels, got {c}")
        cols = self._im2col(x)
        self._cols = cols
        self._x_shape = x.shape
        oh, ow = h - k + 1, w - k + 1
        w2d = self.weights.value.reshape(-1, self.weights.value.shape[3])
        y = cols.reshape(n * oh * ow, -1) @ w2d + self.bias.value
        return y.reshape(n, oh, ow, -1)

    def backward(self, grad_out):
        k = self.kernel_size
        n, h, w, c = self._x_shape
        oh, ow = h - k + 1, w - k + 1
        cout = self.weights.value.shape[3]
        if grad_out.shape != (n, oh, ow, cout):
            raise InputShapeError(f"grad shape {grad_out.shape} != forward output {(n, oh, ow, cout)}")
        g2d = grad_out.reshape(n * oh * ow, cout)
        cols2d = self._cols.reshape(n * oh * ow, -1)
        self.weights.grad += (cols2d.T @ g2d).reshape(self.weights.value.shape)
        self.bias.grad += g2d.sum(axis=0)

        w2d = self.weights.value.reshape(-1, cout)
        grad_cols = (g2d @ w2d.T).reshape(n, oh, ow, k, k, c)
        grad_x = np.zeros(self._x_shape, dtype=grad_out.dtype)
        for ki in range(k):
            for kj in range(k):
                grad_x[:, ki : ki + oh, kj : kj + ow, :] += grad_cols[:, :, :, ki, kj, :]
        return grad_x


class BatchNorm(Layer):
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes by biased batch statistics and folds them into
    the running stats (new = momentum*old + (1-momentum)*batch); infer
    mode uses the running stats only. The 0.9 momentum keeps running
    stats usable after a few hundred steps; higher values leave them
    stale for small training runs.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.9, dtype=np.float32):
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter("bn.gamma", np.ones(channels, dtype=dtype))
        self.beta = Parameter("bn.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x, train=False):
        if x.shape[-1] != self.gamma.value.shape[0]:
            raise InputShapeError(f"expected {self.gamma.value.shape[0]} channels, got {x.shape[-1]}")
        axes = tuple(range(x.ndim - 1))
        if train:
            if x.shape[0] < 2:
                raise DegenerateBatchError("batch normalization needs batch size >= 2 in train mode")
            x_sum = x.sum(axis=axes)
            count = x.size // x.shape[-1]
            mean = x_sum / count
            var = x.var(axis=axes)
            self.running_mean = (self.momentum * self.running_mean + (1 - self.momentum) * mean).astype(
                self.running_mean.dtype
            )
            self.running_var = (self.momentum * self.running_var + (1 - self.momentum) * var).astype(
                self.running_var.dtype
            )
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        scale = self.gamma.value * inv_std
        if train:
            self._cache = (x, x_sum, mean, inv_std, count)
        return x * scale + (self.beta.value - mean * scale)

    def backward(self, grad_out):
        # Reduction-based form of the standard batch-norm gradient: all
        # per-channel sums are taken without materializing full-size
        # temporaries beyond the output array.
        x, x_sum, mean, inv_std, count = self._cache
        ch = grad_out.shape[-1]
        g2 = grad_out.reshape(-1, ch)
        x2 = x.reshape(-1, ch)
        g_sum = g2.sum(axis=0)
        gx_sum = np.einsum("nc,nc->c", g2, x2)

        self.gamma.grad += inv_std * (gx_sum - mean * g_sum)
        self.beta.grad += g_sum

        gamma = self.gamma.value
        dxhat_sum = gamma * g_sum
        dxhat_x_sum = gamma * gx_sum
        dvar = (dxhat_x_sum - mean * dxhat_sum) * (-0.5) * inv_std**3
        centered_sum = x_sum - count * mean
        dmean = -dxhat_sum * inv_std + dvar * (-2.0 / count) * centered_sum
        a = gamma * inv_std
        b = 2.0 * dvar / count
        c = dmean / count - mean * b
        return grad_out * a + (x * b + c)


class Activation(Layer):
    """Elementwise nonlinearity: relu, tanh, or elu (alpha=1)."""

    def __init__(self, kind: str):
        if kind not in ("relu", "tanh", "elu"):
            raise ValueError(f"unsupported activation {kind!r}")
        self.kind = kind
        self._cache = None

    def forward(self, x, train=False):
        if self.kind == "relu":
            y = np.maximum(x, 0)
            self._cache = x > 0
        elif self.kind == "tanh":
            y = np.tanh(x)
            self._cache = y
        else:
            y = np.where(x > 0, x, np.expm1(x))
            self._cache = (x > 0, y)
        return y

    def backward(self, grad_out):
        if self.kind == "relu":
            return grad_out * self._cache
        if self.kind == "tanh":
            return grad_out * (1.0 - self._cache**2)
        pos, y = self._cache
        return grad_out * np.where(pos, 1.0, y + 1.0)


class PReLU(Layer):
    """Leaky activation with one learnable slope per channel (last axis)."""

    def __init__(self, channels, init_slope=0.25, dtype=np.float32):
        self.slope = Parameter("prelu.slope", np.full(channels, init_slope, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.slope]

    def forward(self, x, train=False):
        if x.shape[-1] != self.slope.value.shape[0]:
            raise InputShapeError(f"expected {self.slope.value.shape[0]} channels, got {x.shape[-1]}")
        self._cache = x
        return np.where(x > 0, x, self.slope.value * x)

    def backward(self, grad_out):
        x = self._cache
        neg = x <= 0
        axes = tuple(range(x.ndim - 1))
        self.slope.grad += np.where(neg, grad_out * x, 0.0).sum(axis=axes)
        return grad_out * np.where(neg, self.slope.value, 1.0)


def pool2x2(x: np.ndarray, kind: str) -> np.ndarray:
    """Non-overlapping 2x2 pooling; spatial dims must be even."""
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise InputShapeError(f"pool2x2 requires even spatial dims, got {h}x{w}")
    win = x.reshape(n, h // 2, 2, w // 2, 2, c)
    if kind == "max":
        return win.max(axis=(2, 4))
    if kind == "avg":
        return win.mean(axis=(2, 4))
    raise ValueError(f"unsupported pool kind {kind!r}")


class Pool2x2(Layer):
    """2x2 stride-2 pooling layer.

    Odd spatial dims are replicate-padded on the bottom/right to the next
    even size before pooling, which realizes ceil-mode output shapes for
    the patch-size sweep. Max backward routes the gradient to the first
    occurrence of the window maximum (top-left priority).
    """

    def __init__(self, kind: str):
        if kind not in POOLS:
            raise ValueError(f"unsupported pool kind {kind!r}")
        self.kind = kind
        self._cache = None

    @staticmethod
    def output_hw(h: int, w: int) -> tuple[int, int]:
        return (h + 1) // 2, (w + 1) // 2

    @staticmethod
    def _corners(x):
        # The four window positions in row-major (tie priority) order.
        return (x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2])

    def forward(self, x, train=False):
        n, h, w, c = x.shape
        pad_h, pad_w = h % 2, w % 2
        if pad_h:
            x = np.concatenate([x, x[:, -1:, :, :]], axis=1)
        if pad_w:
            x = np.concatenate([x, x[:, :, -1:, :]], axis=2)
        corners = self._corners(x)
        if self.kind == "max":
            y = np.maximum(np.maximum(corners[0], corners[1]), np.maximum(corners[2], corners[3]))
            self._cache = ((h, w), (pad_h, pad_w), corners, y)
        else:
            y = (corners[0] + corners[1] + corners[2] + corners[3]) / 4.0
            self._cache = ((h, w), (pad_h, pad_w), None, None)
        return y

    def backward(self, grad_out):
        (h, w), (pad_h, pad_w), corners, y = self._cache
        n, oh, ow, c = grad_out.shape
        gpad = np.zeros((n, 2 * oh, 2 * ow, c), dtype=grad_out.dtype)
        gslots = self._corners(gpad)
        if self.kind == "max":
            taken = np.zeros(grad_out.shape, dtype=bool)
            zero = grad_out.dtype.type(0)
            for corner, slot in zip(corners, gslots):
                hit = corner == y
                hit &= ~taken
                slot[...] = np.where(hit, grad_out, zero)
                taken |= hit
        else:
            g4 = grad_out / 4.0
            for slot in gslots:
                slot[...] = g4
        if not (pad_h or pad_w):
            return gpad
        grad_x = gpad[:, :h, :w, :].copy()
        if pad_h:
            grad_x[:, h - 1, :, :] += gpad[:, h, :w, :]
        if pad_w:
            grad_x[:, :, w - 1, :] += gpad[:, :h, w, :]
        if pad_h and pad_w:
            grad_x[:, h - 1, w - 1, :] += gpad[:, h, w, :]
        return grad_x


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Dense(Layer):
    """Affine map y = x W + b."""

    def __init__(self, in_features, out_features, gen: np.random.Generator | None = None,
                 init="he", dtype=np.float32):
        shape = (in_features, out_features)
        if gen is None:
            w = np.zeros(shape, dtype=dtype)
        elif init == "xavier":
            w = _xavier_uniform(shape, in_features, out_features, gen, dtype)
        else:
            w = _he_uniform(shape, in_features, gen, dtype)
        self.weights = Parameter("dense.weights", w)
        self.bias = Parameter("dense.bias", np.zeros(out_features, dtype=dtype))
        self._x = None

    def params(self):
        return [self.weights, self.bias]

    def forward(self, x, train=False):
        if x.shape[1] != self.weights.value.shape[0]:
            raise InputShapeError(f"expected {self.weights.value.shape[0]} features, got {x.shape[1]}")
        self._x = x
        return x @ self.weights.value + self.bias.value

    def backward(self, grad_out):
        self.weights.grad += self._x.T @ grad_out
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weights.value.T


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true labels."""
    n = probs.shape[0]
    picked = probs[np.arange(n), labels]
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


class SoftmaxCrossEntropy:
    """Fused softmax + mean cross-entropy with the standard exact gradient."""

    def __init__(self):
        self._cache = None

    def forward(self, logits, labels):
        probs = softmax(logits)
        self._cache = (probs, labels)
        return cross_entropy(probs, labels), probs

    def backward(self):
        probs, labels = self._cache
        n = probs.shape[0]
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        return grad / n
