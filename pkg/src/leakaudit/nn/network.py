"""Sequential network: forward/backward orchestration, loss, and snapshots.

The network applies its layers in order, ends in a softmax over class
logits, and trains against cross-entropy. ``backward`` runs a combined
forward+backward pass and can also return the gradient of the loss with
respect to the input batch, which both the DP trainer and the
distance-to-confident walker need.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

# Added inside log() so a zero posterior yields a large finite loss.
EPS_LOG = 1e-12

_MAGIC = b"LKAP"
_SNAPSHOT_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class NonFiniteError(ArithmeticError):
    """A public operation produced NaN/Inf values."""


def softmax(logits):
    """Row-wise stable softmax; rows sum to 1 within float tolerance."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(posteriors, targets):
    """Per-sample cross-entropy and its mean.

    ``targets`` may be one-hot, smoothed, or soft teacher rows; entries
    must be non-negative. Returns (per_sample, mean).
    """
    posteriors = np.asarray(posteriors)
    targets = np.asarray(targets)
    if posteriors.shape != targets.shape:
        raise ValueError(f"posteriors {posteriors.shape} vs targets {targets.shape}")
    if np.any(targets < 0):
        raise ValueError("target distributions must be non-negative")
    per_sample = -(targets * np.log(posteriors + EPS_LOG)).sum(axis=1)
    return per_sample, float(per_sample.mean())


def one_hot(labels, num_classes, dtype=np.float32):
    out = np.zeros((len(labels), num_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1
    return out


@dataclass
class BackwardResult:
    """Gradients from one combined forward+backward pass."""

    param_grads: list  # per layer: dict name -> array, or None
    losses: np.ndarray  # per-sample cross-entropy
    posteriors: np.ndarray
    input_grad: np.ndarray | None = None


@dataclass
class Network:
    layers: list
    input_shape: tuple
    num_classes: int
    dtype: np.dtype = np.dtype(np.float32)
    train_mode: bool = False
    layer_shapes: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.dtype = np.dtype(self.dtype)

    def train(self):
        self.train_mode = True
        return self

    def eval(self):
        self.train_mode = False
        return self

    @property
    def weight_layer_count(self):
        return sum(1 for l in self.layers if l.has_weights)

    def parameters(self):
        """Yield (layer_index, name, array) in a fixed order."""
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield i, name, arr

    def set_parameter(self, layer_index, name, value):
        layer = self.layers[layer_index]
        current = layer.params[name]
        if current.shape != value.shape:
            raise ValueError(f"shape mismatch for layer {layer_index} {name}")
        setattr(layer, name, value.astype(self.dtype))

    def parameter_count(self):
        return sum(arr.size for _, _, arr in self.parameters())

    def _check_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise ValueError(f"expected batch of shape (n, {self.input_shape}), got {x.shape}")
        return x

    def _run_forward(self, x, rng):
        caches = []
        out = x
        for layer in self.layers:
            out, cache = layer.forward(out, self.train_mode, rng)
            caches.append(cache)
        return out, caches

    def forward_logits(self, x, rng=None):
        x = self._check_input(x)
        logits, _ = self._run_forward(x, rng)
        return logits

    def forward(self, x, rng=None):
        """Posterior rows (softmax over logits). Dropout only in train mode."""
        probs = softmax(self.forward_logits(x, rng))
        if not np.all(np.isfinite(probs)):
            raise NonFiniteError("non-finite posteriors; check inputs and parameters")
        return probs

    def predict(self, x):
        return self.forward_logits(x).argmax(axis=1)

    def backward(self, x, targets, temperature=1.0, reduction="mean", rng=None, want_input_grad=False):
        """Combined pass returning parameter gradients and per-sample losses.

        ``temperature`` divides the logits before the softmax (distillation
        training); gradients are taken of the ``reduction`` of per-sample
        cross-entropy ('mean' or 'sum').
        """
        x = self._check_input(x)
        targets = np.asarray(targets, dtype=self.dtype)
        logits, caches = self._run_forward(x, rng)
        if targets.shape != logits.shape:
            raise ValueError(f"targets {targets.shape} vs logits {logits.shape}")
        t = self.dtype.type(temperature)
        probs = softmax(logits / t)
        losses, _ = cross_entropy(probs, targets)
        if not np.all(np.isfinite(losses)):
            raise NonFiniteError("non-finite loss in backward pass")
        if reduction == "mean":
            scale = self.dtype.type(1.0 / (x.shape[0] * temperature))
        elif reduction == "sum":
            scale = self.dtype.type(1.0 / temperature)
        else:
            raise ValueError(f"unknown reduction {reduction!r}")
        grad = (probs - targets) * scale
        param_grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            if i == 0 and not want_input_grad and not self.layers[0].has_weights:
                break
            grad, layer_grads = self.layers[i].backward(grad, caches[i])
            param_grads[i] = layer_grads
        input_grad = grad if want_input_grad else None
        return BackwardResult(param_grads, losses, probs, input_grad)

    # -- parameter snapshots ------------------------------------------------
    # Flat little-endian blob: magic 'LKAP', u16 version, u8 dtype code
    # (0=float32, 1=float64), u8 reserved, u32 tensor count; per tensor a
    # u8 ndim and u32 dims; then the raw tensor data, C order, in sequence.

    def save_params(self, path):
        arrays = [arr for _, _, arr in self.parameters()]
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<HBBI", _SNAPSHOT_VERSION, _DTYPE_CODES[self.dtype], 0, len(arrays)))
            for arr in arrays:
                f.write(struct.pack("<B", arr.ndim))
                f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            for arr in arrays:
                f.write(np.ascontiguousarray(arr, dtype=self.dtype.newbyteorder("<")).tobytes())

    def load_params(self, path):
        specs = list(self.parameters())
        with open(path, "rb") as f:
            if f.read(4) != _MAGIC:
                raise ValueError(f"{path}: not a parameter snapshot")
            version, dtype_code, _, count = struct.unpack("<HBBI", f.read(8))
            if version != _SNAPSHOT_VERSION:
                raise ValueError(f"{path}: unsupported snapshot version {version}")
            dtype = _CODE_DTYPES.get(dtype_code)
            if dtype is None:
                raise ValueError(f"{path}: unknown dtype code {dtype_code}")
            if count != len(specs):
                raise ValueError(f"{path}: snapshot has {count} tensors, network has {len(specs)}")
            shapes = []
            for _ in range(count):
                (ndim,) = struct.unpack("<B", f.read(1))
                shapes.append(struct.unpack(f"<{ndim}I", f.read(4 * ndim)))
            for (layer_index, name, arr), shape in zip(specs, shapes):
                if tuple(arr.shape) != shape:
                    raise ValueError(f"{path}: shape {shape} does not match layer {layer_index} {name} {arr.shape}")
                raw = f.read(int(np.prod(shape)) * dtype.itemsize)
                data = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).reshape(shape)
                self.set_parameter(layer_index, name, data.astype(self.dtype))
