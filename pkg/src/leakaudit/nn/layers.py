"""Layer primitives with explicit forward/backward passes.

Each layer is parameterised once via ``build(in_shape, rng, dtype)`` and is
afterwards stateless with respect to activations: ``forward`` returns the
output together with a cache that ``backward`` consumes. Keeping caches out
of the layer objects lets a network in inference mode be shared read-only.

Conventions: image tensors are (batch, channels, height, width); flat
tensors are (batch, features). Convolutions are 3x3, stride 1, zero-padded
to preserve spatial size; pooling is 2x2 max with stride 2.
"""

import numpy as np


def kaiming_uniform(shape, fan_in, rng, dtype):
    """ReLU-gain Kaiming init: uniform on [-sqrt(6/fan_in), sqrt(6/fan_in)]."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base layer. Subclasses override build/forward/backward."""

    def build(self, in_shape, rng, dtype):
        """Allocate parameters for the given input shape; return the output shape."""
        raise NotImplementedError

    def forward(self, x, train, rng):
        """Return (output, cache)."""
        raise NotImplementedError

    def backward(self, grad_out, cache):
        """Return (grad_in, param_grads or None)."""
        raise NotImplementedError

    @property
    def params(self):
        """Dict of parameter name -> array; empty for parameter-free layers."""
        return {}

    @property
    def has_weights(self):
        return bool(self.params)


class Conv(Layer):
    """3x3 same-padding convolution.

    Windows are gathered into a (batch, k*k*channels, positions) buffer by
    k*k plain slice copies; forward and backward are then batched matmuls.
    The layout never transposes the feature maps, which keeps the hot path
    free of large strided copies.
    """

    def __init__(self, out_channels, kernel_size=3, padding=1):
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.padding = padding
        self.weight = None
        self.bias = None

    def build(self, in_shape, rng, dtype):
        c, h, w = in_shape
        k = self.kernel_size
        fan_in = c * k * k
        self.weight = kaiming_uniform((self.out_channels, c, k, k), fan_in, rng, dtype)
        self.bias = np.zeros(self.out_channels, dtype=dtype)
        out_h = h + 2 * self.padding - k + 1
        out_w = w + 2 * self.padding - k + 1
        if out_h < 1 or out_w < 1:
            raise ValueError(f"conv input {in_shape} too small for {k}x{k} kernel")
        return (self.out_channels, out_h, out_w)

    @property
    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def _weight_matrix(self):
        # (out_channels, k*k*c) in the same (i, j, c) order as the window buffer
        k = self.kernel_size
        return self.weight.transpose(0, 2, 3, 1).reshape(self.out_channels, k * k * self.weight.shape[1])

    def forward(self, x, train, rng):
        b, c, h, w = x.shape
        k, p = self.kernel_size, self.padding
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        out_h = h + 2 * p - k + 1
        out_w = w + 2 * p - k + 1
        cols = np.empty((b, k * k * c, out_h * out_w), dtype=x.dtype)
        windows = cols.reshape(b, k, k, c, out_h, out_w)
        for i in range(k):
            for j in range(k):
                windows[:, i, j] = padded[:, :, i : i + out_h, j : j + out_w]
        out = np.matmul(self._weight_matrix(), cols)
        out += self.bias[:, None]
        return out.reshape(b, self.out_channels, out_h, out_w), (x.shape, cols)

    def backward(self, grad_out, cache):
        in_shape, cols = cache
        b, c, h, w = in_shape
        k, p = self.kernel_size, self.padding
        _, o, out_h, out_w = grad_out.shape
        grad_flat = grad_out.reshape(b, o, out_h * out_w)
        grad_w = np.matmul(grad_flat, cols.transpose(0, 2, 1)).sum(axis=0)
        grad_w = np.ascontiguousarray(grad_w.reshape(o, k, k, c).transpose(0, 3, 1, 2))
        grad_b = grad_flat.sum(axis=(0, 2))
        grad_cols = np.matmul(self._weight_matrix().T, grad_flat)
        grad_windows = grad_cols.reshape(b, k, k, c, out_h, out_w)
        grad_x = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=grad_out.dtype)
        # scatter-add one kernel offset at a time: k*k vectorised adds
        for i in range(k):
            for j in range(k):
                grad_x[:, :, i : i + out_h, j : j + out_w] += grad_windows[:, i, j]
        if p:
            grad_x = grad_x[:, :, p : p + h, p : p + w]
        return grad_x, {"weight": grad_w, "bias": grad_b}


class MaxPool(Layer):
    """2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.

    Backward routes each output gradient to exactly one input position: the
    first window slot (row-major) holding the maximum.
    """

    def __init__(self, size=2):
        self.size = size

    def build(self, in_shape, rng, dtype):
        c, h, w = in_shape
        if h < self.size or w < self.size:
            raise ValueError(f"pool input {in_shape} smaller than window {self.size}")
        return (c, h // self.size, w // self.size)

    def _slots(self, x, out_h, out_w):
        s = self.size
        return [(x[:, :, i : out_h * s : s, j : out_w * s : s]) for i in range(s) for j in range(s)]

    def forward(self, x, train, rng):
        _, _, h, w = x.shape
        out_h, out_w = h // self.size, w // self.size
        slots = self._slots(x, out_h, out_w)
        out = slots[0].copy()
        winner = np.zeros(out.shape, dtype=np.int8)
        for n, view in enumerate(slots[1:], start=1):
            better = view > out
            np.copyto(out, view, where=better)
            winner[better] = n
        return out, (x.shape, winner)

    def backward(self, grad_out, cache):
        in_shape, winner = cache
        _, _, h, w = in_shape
        s = self.size
        out_h, out_w = h // s, w // s
        grad_x = np.zeros(in_shape, dtype=grad_out.dtype)
        for n in range(s * s):
            i, j = divmod(n, s)
            grad_x[:, :, i : out_h * s : s, j : out_w * s : s] += grad_out * (winner == n)
        return grad_x, None


class Relu(Layer):
    def build(self, in_shape, rng, dtype):
        return in_shape

    def forward(self, x, train, rng):
        out = np.maximum(x, 0)
        return out, out

    def backward(self, grad_out, cache):
        # cache > 0 agrees with x > 0: zeros stay zero either way
        return grad_out * (cache > 0), None


class Dropout(Layer):
    """Inverted unit dropout: active only in training mode."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def build(self, in_shape, rng, dtype):
        return in_shape

    def forward(self, x, train, rng):
        if not train or self.rate == 0.0:
            return x, None
        keep = (rng.random(x.shape) >= self.rate).astype(x.dtype)
        scale = x.dtype.type(1.0 / (1.0 - self.rate))
        mask = keep * scale
        return x * mask, mask

    def backward(self, grad_out, cache):
        if cache is None:
            return grad_out, None
        return grad_out * cache, None


class SpatialDropout(Layer):
    """Channel dropout: zeroes whole feature maps, rescaling survivors."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"spatial dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def build(self, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise ValueError("spatial dropout requires (channels, h, w) input")
        return in_shape

    def forward(self, x, train, rng):
        if not train or self.rate == 0.0:
            return x, None
        b, c = x.shape[:2]
        keep = (rng.random((b, c, 1, 1)) >= self.rate).astype(x.dtype)
        scale = x.dtype.type(1.0 / (1.0 - self.rate))
        mask = keep * scale
        return x * mask, mask

    def backward(self, grad_out, cache):
        if cache is None:
            return grad_out, None
        return grad_out * cache, None


class Flatten(Layer):
    def build(self, in_shape, rng, dtype):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train, rng):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad_out, cache):
        return grad_out.reshape(cache), None


class Dense(Layer):
    """Fully-connected layer: y = x @ w + b."""

    def __init__(self, out_features):
        self.out_features = out_features
        self.weight = None
        self.bias = None

    def build(self, in_shape, rng, dtype):
        if len(in_shape) != 1:
            raise ValueError(f"dense layer expects flat input, got shape {in_shape}")
        in_features = in_shape[0]
        self.weight = kaiming_uniform((in_features, self.out_features), in_features, rng, dtype)
        self.bias = np.zeros(self.out_features, dtype=dtype)
        return (self.out_features,)

    @property
    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, train, rng):
        return x @ self.weight + self.bias, x

    def backward(self, grad_out, cache):
        grad_w = cache.T @ grad_out
        grad_b = grad_out.sum(axis=0)
        grad_x = grad_out @ self.weight.T
        return grad_x, {"weight": grad_w, "bias": grad_b}
