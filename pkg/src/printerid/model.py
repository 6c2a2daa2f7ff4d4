"""The two-channel letter CNN.

Fixed stack: Conv(2->50, 3x3) -> BN -> Act -> Pool -> Conv(50->50, 3x3)
-> BN -> Act -> Pool -> Flatten -> Dense(->512) -> Act -> Dense(->C)
-> Softmax, parametric in patch size, class count, activation kind, and
pool kind. With patch size 30 and 18 classes the stack holds exactly
955,046 trainable parameters.

Models serialize to a versioned binary container (magic "PTNN") holding
every trainable array plus batch-norm running statistics.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import rng
from .errors import FileFormatError, InputShapeError
from .layers import (
    ACTIVATIONS,
    POOLS,
    Activation,
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    Layer,
    Pool2x2,
    PReLU,
    SoftmaxCrossEntropy,
    softmax,
)

MAGIC = b"PTNN"
FORMAT_VERSION = 1
N_FILTERS = 50
DENSE_WIDTH = 512
KERNEL = 3

_ACT_IDS = {kind: i for i, kind in enumerate(ACTIVATIONS)}
_POOL_IDS = {kind: i for i, kind in enumerate(POOLS)}


def conv_stack_shapes(patch_size: int) -> list[tuple[int, int, int]]:
    """(H, W, C) after each of conv1, pool1, conv2, pool2.

    Pooling uses ceil-mode shape arithmetic, so e.g. patch size 32 ends in
    7 x 7 x 50 (flatten 2450).
    """
    h = w = patch_size
    shapes = []
    for _ in range(2):
        if h < KERNEL or w < KERNEL:
            raise InputShapeError(f"patch size {patch_size} too small for the conv stack")
        h, w = h - KERNEL + 1, w - KERNEL + 1
        shapes.append((h, w, N_FILTERS))
        h, w = Pool2x2.output_hw(h, w)
        shapes.append((h, w, N_FILTERS))
    return shapes


class Model:
    def __init__(self, patch_size: int, n_classes: int, activation: str, pool: str,
                 layers: list[Layer], dtype=np.float32):
        self.patch_size = patch_size
        self.n_classes = n_classes
        self.activation = activation
        self.pool = pool
        self.layers = layers
        self.dtype = dtype
        self.loss_fn = SoftmaxCrossEntropy()

    @classmethod
    def build(cls, patch_size: int, n_classes: int, activation: str = "relu",
              pool: str = "max", seed: int = 0, dtype=np.float32) -> "Model":
        """Construct the stack with seeded fan-in-scaled initialization.

        ReLU-family activations get He-uniform weights, tanh gets
        Xavier-uniform; biases start at zero, PReLU slopes at 0.25.
        """
        if activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {activation!r}")
        if pool not in POOLS:
            raise ValueError(f"unsupported pool {pool!r}")
        if n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {n_classes}")
        init = "xavier" if activation == "tanh" else "he"
        gen = rng.stream(seed, rng.WEIGHT_INIT)

        def act(channels):
            return PReLU(channels, dtype=dtype) if activation == "prelu" else Activation(activation)

        shapes = conv_stack_shapes(patch_size)
        flat = int(np.prod(shapes[-1]))
        layers = [
            Conv2D(2, N_FILTERS, KERNEL, gen=gen, init=init, dtype=dtype),
            BatchNorm(N_FILTERS, dtype=dtype),
            act(N_FILTERS),
            Pool2x2(pool),
            Conv2D(N_FILTERS, N_FILTERS, KERNEL, gen=gen, init=init, dtype=dtype),
            BatchNorm(N_FILTERS, dtype=dtype),
            act(N_FILTERS),
            Pool2x2(pool),
            Flatten(),
            Dense(flat, DENSE_WIDTH, gen=gen, init=init, dtype=dtype),
            act(DENSE_WIDTH),
            Dense(DENSE_WIDTH, n_classes, gen=gen, init=init, dtype=dtype),
        ]
        return cls(patch_size, n_classes, activation, pool, layers, dtype=dtype)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Logits for a batch of N x P x P x 2 patches."""
        x = np.asarray(x)
        if x.ndim != 4 or x.shape[1] != self.patch_size or x.shape[2] != self.patch_size or x.shape[3] != 2:
            raise InputShapeError(
                f"expected N x {self.patch_size} x {self.patch_size} x 2 input, got {x.shape}"
            )
        out = x.astype(self.dtype, copy=False)
        for layer in self.layers:
            out = layer.forward(out, train=train)
        return out

    def predict_probs(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x, train=False))

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def loss_and_backward(self, x: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
        """Train-mode forward, mean CE loss, and full backward sweep."""
        logits = self.forward(x, train=True)
        loss, probs = self.loss_fn.forward(logits, np.asarray(labels))
        self.backward(self.loss_fn.backward())
        return loss, probs

    def parameters(self):
        return [p for layer in self.layers for p in layer.params()]

    def count_params(self) -> int:
        return sum(p.size for p in self.parameters())

    # -- checkpointing ----------------------------------------------------

    def snapshot(self):
        """Deep copy of trainable values and BN running statistics."""
        values = [p.value.copy() for p in self.parameters()]
        stats = [(l.running_mean.copy(), l.running_var.copy()) for l in self.layers if isinstance(l, BatchNorm)]
        return values, stats

    def restore(self, snap) -> None:
        values, stats = snap
        for p, v in zip(self.parameters(), values):
            p.value[...] = v
        bns = [l for l in self.layers if isinstance(l, BatchNorm)]
        for bn, (mean, var) in zip(bns, stats):
            bn.running_mean[...] = mean
            bn.running_var[...] = var

    # -- serialization -----------------------------------------------------

    def _state_arrays(self):
        blocks = []
        for layer in self.layers:
            if isinstance(layer, Conv2D):
                blocks.append((1, [layer.weights.value, layer.bias.value]))
            elif isinstance(layer, BatchNorm):
                blocks.append((2, [layer.gamma.value, layer.beta.value, layer.running_mean, layer.running_var]))
            elif isinstance(layer, Dense):
                blocks.append((3, [layer.weights.value, layer.bias.value]))
            elif isinstance(layer, PReLU):
                blocks.append((4, [layer.slope.value]))
        return blocks

    def save(self, path: str | Path) -> None:
        parts = [MAGIC, struct.pack("<HHHBB", FORMAT_VERSION, self.patch_size, self.n_classes,
                                    _ACT_IDS[self.activation], _POOL_IDS[self.pool])]
        for layer_id, arrays in self._state_arrays():
            parts.append(struct.pack("<BB", layer_id, len(arrays)))
            for arr in arrays:
                parts.append(struct.pack("<B", arr.ndim))
                parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
                parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path: str | Path) -> "Model":
        raw = Path(path).read_bytes()
        if raw[:4] != MAGIC:
            raise FileFormatError(f"{path}: not a PTNN model file")
        try:
            version, patch_size, n_classes, act_id, pool_id = struct.unpack_from("<HHHBB", raw, 4)
        except struct.error as exc:
            raise FileFormatError(f"{path}: truncated header") from exc
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported model format version {version}")
        try:
            activation = ACTIVATIONS[act_id]
            pool = POOLS[pool_id]
        except IndexError as exc:
            raise FileFormatError(f"{path}: unknown activation/pool id") from exc

        model = cls.build(patch_size, n_classes, activation, pool, seed=0)
        offset = 4 + struct.calcsize("<HHHBB")
        for layer_id, arrays in model._state_arrays():
            try:
                got_id, count = struct.unpack_from("<BB", raw, offset)
            except struct.error as exc:
                raise FileFormatError(f"{path}: truncated layer block") from exc
            offset += 2
            if got_id != layer_id or count != len(arrays):
                raise FileFormatError(f"{path}: layer block mismatch (got id {got_id}, want {layer_id})")
            for arr in arrays:
                ndim = raw[offset]
                offset += 1
                shape = struct.unpack_from(f"<{ndim}I", raw, offset)
                offset += 4 * ndim
                if shape != arr.shape:
                    raise FileFormatError(f"{path}: array shape {shape} != expected {arr.shape}")
                n = int(np.prod(shape)) if ndim else 1
                data = np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
                offset += 4 * n
                arr[...] = data.reshape(shape)
        if offset != len(raw):
            raise FileFormatError(f"{path}: {len(raw) - offset} trailing bytes")
        return model

    # -- introspection -----------------------------------------------------

    def first_layer_filter_grid(self, cell_scale: int = 12) -> np.ndarray:
        """Render conv-1 filters as one grid image per input channel.

        Each channel's 50 filters form a 5 x 10 matrix; every 3x3 filter is
        min-max normalized and nearest-upscaled. Channel grids stack
        vertically with a white divider.
        """
        w = self.layers[0].weights.value  # K x K x 2 x 50
        grids = []
        for ch in range(w.shape[2]):
            rows = []
            for r in range(5):
                cells = []
                for c in range(10):
                    f = w[:, :, ch, r * 10 + c].astype(np.float64)
                    span = f.max() - f.min()
                    norm = (f - f.min()) / span if span > 0 else np.full_like(f, 0.5)
                    cell = np.kron(norm, np.ones((cell_scale, cell_scale)))
                    cells.append(np.pad(cell, 1, constant_values=1.0))
                rows.append(np.concatenate(cells, axis=1))
            grids.append(np.concatenate(rows, axis=0))
        divider = np.ones((cell_scale, grids[0].shape[1]))
        full = np.concatenate([grids[0], divider, grids[1]], axis=0)
        return np.clip(np.floor(full * 255 + 0.5), 0, 255).astype(np.uint8)
