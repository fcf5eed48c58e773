"""From-scratch CNN: layer math, single-example ops and the Network stack.

Tensors are plain numpy ndarrays in row-major order, images as
(height, width, channels) and batches as (n, h, w, c).  Every layer
implements forward(x, train, rng) -> (y, cache) and
backward(cache, dy) -> (dx, param_grads); caches are explicit values
rather than layer state, so a Network can serve concurrent inference
without synchronization.

The canonical stack is resize -> normalize -> conv(relu) -> conv(relu)
-> maxpool -> dropout -> flatten -> dense(relu) -> dropout -> dense,
producing class-count logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ConsistencyError, LabelError, ShapeError
from .rng import STREAM_DROPOUT, STREAM_INIT, philox_stream

MODES = ("train", "infer")


def _check_mode(mode: str) -> bool:
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    return mode == "train"


# ---------------------------------------------------------------------------
# bilinear resize

def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix of bilinear weights.

    Source coordinates use half-pixel centers, src = (dst + 0.5) * n_in
    / n_out - 0.5, clamped to the valid range; each row holds the <= 2
    nonzero weights of one output sample.
    """
    dst = np.arange(n_out)
    src = np.clip((dst + 0.5) * (n_in / n_out) - 0.5, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (dst, lo), 1.0 - frac)
    np.add.at(mat, (dst, hi), frac)
    return mat


def _resize_batch(x, rows, cols):
    # y[n,o,p,c] = sum_{h,w} rows[o,h] cols[p,w] x[n,h,w,c]
    t = np.tensordot(rows, x, axes=(1, 1))        # (oh, n, w, c)
    y = np.tensordot(cols, t, axes=(1, 2))        # (ow, oh, n, c)
    return y.transpose(2, 1, 0, 3)


def resize_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of one (h, w, c) image with half-pixel centers."""
    if x.ndim != 3:
        raise ShapeError(f"expected (h, w, c) image, got shape {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"output size must be positive, got {(out_h, out_w)}")
    rows = _interp_matrix(x.shape[0], out_h)
    cols = _interp_matrix(x.shape[1], out_w)
    return _resize_batch(x[None], rows, cols)[0].astype(x.dtype, copy=False)


# ---------------------------------------------------------------------------
# convolution (valid padding, stride 1, NHWC x (kh, kw, cin, cout))

def _im2col(x, kh, kw):
    # (n, h, w, c) -> (n, oh, ow, kh*kw*c) patches, window-major order
    v = sliding_window_view(x, (kh, kw), axis=(1, 2))  # (n, oh, ow, c, kh, kw)
    n, oh, ow, c = v.shape[:4]
    return v.transpose(0, 1, 2, 4, 5, 3).reshape(n, oh, ow, kh * kw * c)


def _conv_batch(x, kernel, bias):
    kh, kw, cin, cout = kernel.shape
    n, h, w, c = x.shape
    if c != cin:
        raise ShapeError(f"input has {c} channels, kernel expects {cin}")
    if h < kh or w < kw:
        raise ShapeError(f"input {h}x{w} smaller than kernel {kh}x{kw}")
    cols = _im2col(x, kh, kw)
    oh, ow = cols.shape[1], cols.shape[2]
    y = cols.reshape(-1, kh * kw * cin) @ kernel.reshape(-1, cout)
    y += bias
    return y.reshape(n, oh, ow, cout), cols


def _conv_batch_backward(cols, x_shape, kernel, dy):
    kh, kw, cin, cout = kernel.shape
    n, h, w, _ = x_shape
    flat_cols = cols.reshape(-1, kh * kw * cin)
    flat_dy = dy.reshape(-1, cout)
    dkernel = (flat_cols.T @ flat_dy).reshape(kernel.shape)
    dbias = flat_dy.sum(axis=0)
    # dx is the full correlation of dy with the spatially flipped,
    # channel-swapped kernel
    flipped = np.ascontiguousarray(kernel[::-1, ::-1].transpose(0, 1, 3, 2))
    padded = np.zeros((n, dy.shape[1] + 2 * (kh - 1), dy.shape[2] + 2 * (kw - 1), cout),
                      dtype=dy.dtype)
    padded[:, kh - 1:kh - 1 + dy.shape[1], kw - 1:kw - 1 + dy.shape[2]] = dy
    dx, _ = _conv_batch(padded, flipped, np.zeros(cin, dtype=dy.dtype))
    return dx, dkernel, dbias


def conv2d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid 2-D cross-correlation of an (h, w, cin) image, stride 1."""
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"want (h,w,cin) x (kh,kw,cin,cout), got {x.shape} x {kernel.shape}")
    y, _ = _conv_batch(x[None], kernel, bias)
    return y[0]


def conv2d_backward(x: np.ndarray, kernel: np.ndarray, dy: np.ndarray):
    """Gradients (dx, dkernel, dbias) for conv2d_forward."""
    x4 = x[None]
    _, cols = _conv_batch(x4, kernel, np.zeros(kernel.shape[-1], dtype=x.dtype))
    dx, dk, db = _conv_batch_backward(cols, x4.shape, kernel, dy[None])
    return dx[0], dk, db


# ---------------------------------------------------------------------------
# pointwise and pooling ops

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def _pool_windows(x):
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool needs even spatial dims, got {h}x{w}")
    # (n, h/2, w/2, c, 4) with the 2x2 window flattened row-major
    return x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(
        n, h // 2, w // 2, c, 4
    )


def _maxpool_batch(x):
    win = _pool_windows(x)
    argmax = win.argmax(axis=-1)  # first occurrence wins ties
    y = np.take_along_axis(win, argmax[..., None], axis=-1)[..., 0]
    return y, argmax


def _maxpool_batch_backward(argmax, dy):
    n, oh, ow, c = dy.shape
    grad_win = (np.arange(4) == argmax[..., None]) * dy[..., None]
    return grad_win.reshape(n, oh, ow, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(
        n, oh * 2, ow * 2, c
    ).astype(dy.dtype, copy=False)


def maxpool2d(x: np.ndarray):
    """2x2/stride-2 max pool of an (h, w, c) image -> (pooled, argmax).

    argmax holds, per output cell, the row-major index (0..3) of the
    winning element inside its 2x2 window; ties go to the first.
    """
    if x.ndim != 3:
        raise ShapeError(f"expected (h, w, c) image, got shape {x.shape}")
    y, am = _maxpool_batch(x[None])
    return y[0], am[0]


def maxpool2d_backward(dy: np.ndarray, argmax: np.ndarray) -> np.ndarray:
    """Scatter each output cotangent back to its argmax position."""
    return _maxpool_batch_backward(argmax[None], dy[None])[0]


def _dropout_mask(shape, rate, rng, dtype):
    # random() is in [0, 1), so >= rate keeps with probability 1 - rate
    return (rng.random(shape) >= rate).astype(dtype)


def dropout(x: np.ndarray, rate: float, mode: str = "infer", rng=None) -> np.ndarray:
    """Inverted dropout: zero with probability rate, scale survivors.

    Inference mode is the identity and consumes no randomness.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not _check_mode(mode) or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("train-mode dropout needs an rng")
    mask = _dropout_mask(x.shape, rate, rng, x.dtype)
    return x * mask * x.dtype.type(1.0 / (1.0 - rate))


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map x @ weights + bias for a single (n,) vector."""
    if x.shape[-1] != weights.shape[0]:
        raise ShapeError(f"input width {x.shape[-1]} != weight rows {weights.shape[0]}")
    return x @ weights + bias


def dense_backward(x: np.ndarray, weights: np.ndarray, dy: np.ndarray):
    """Gradients (dx, dweights, dbias) for a single-vector dense op."""
    return weights @ dy, np.outer(x, dy), dy.copy()


def normalize_apply(x: np.ndarray, mean: float, variance: float,
                    eps: float = 1e-6) -> np.ndarray:
    """Elementwise (x - mean) / sqrt(variance + eps)."""
    if variance < 0:
        raise ConfigError(f"variance must be >= 0, got {variance}")
    return (x - mean) / np.sqrt(variance + eps)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis (max subtracted first)."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, label: int):
    """(loss, dlogits) for one logit vector against an integer label."""
    if logits.ndim != 1:
        raise ShapeError(f"expected a logit vector, got shape {logits.shape}")
    if not 0 <= label < logits.shape[-1]:
        raise LabelError(f"label {label} outside [0, {logits.shape[-1]})")
    m = logits.max()
    e = np.exp(logits - m)
    z = e.sum()
    loss = float(np.log(z) + m - logits[label])
    dlogits = e / z
    dlogits[label] -= 1.0
    return loss, dlogits


def softmax_cross_entropy_batch(logits: np.ndarray, labels: np.ndarray):
    """Per-example (losses, dlogits) for (n, c) logits and (n,) labels."""
    c = logits.shape[-1]
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelError(f"labels outside [0, {c})")
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    z = e.sum(axis=-1, keepdims=True)
    rows = np.arange(len(labels))
    losses = np.log(z[:, 0]) + m[:, 0] - logits[rows, labels]
    dlogits = e / z
    dlogits[rows, labels] -= 1.0
    return losses, dlogits


# ---------------------------------------------------------------------------
# layers

class Resize:
    """Fixed bilinear resize to (out_h, out_w)."""

    def __init__(self, in_h, in_w, out_h, out_w, dtype=np.float32):
        self.out_h, self.out_w = out_h, out_w
        self._rows = _interp_matrix(in_h, out_h).astype(dtype)
        self._cols = _interp_matrix(in_w, out_w).astype(dtype)

    def params(self):
        return []

    def forward(self, x, train=False, rng=None):
        return _resize_batch(x, self._rows, self._cols), None

    def backward(self, cache, dy):
        return _resize_batch(dy, self._rows.T, self._cols.T), []


class Normalize:
    """Shift/scale by dataset pixel statistics, (x - mean)/sqrt(var + eps)."""

    EPS = 1e-6

    def __init__(self, mean=0.0, variance=1.0):
        self.set_stats(mean, variance)

    def set_stats(self, mean, variance):
        if variance < 0:
            raise ConfigError(f"variance must be >= 0, got {variance}")
        self.mean = float(mean)
        self.variance = float(variance)

    def params(self):
        return []

    def forward(self, x, train=False, rng=None):
        inv = x.dtype.type(1.0 / np.sqrt(self.variance + self.EPS))
        return (x - x.dtype.type(self.mean)) * inv, None

    def backward(self, cache, dy):
        inv = dy.dtype.type(1.0 / np.sqrt(self.variance + self.EPS))
        return dy * inv, []


class Conv2D:
    """Valid 3x3-style convolution with optional fused ReLU."""

    def __init__(self, cin, cout, ksize, rng, dtype=np.float32, use_relu=True):
        fan_in = ksize * ksize * cin
        fan_out = ksize * ksize * cout
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self.kernel = rng.uniform(-limit, limit, (ksize, ksize, cin, cout)).astype(dtype)
        self.bias = np.zeros(cout, dtype=dtype)
        self.use_relu = use_relu

    def params(self):
        return [self.kernel, self.bias]

    def forward(self, x, train=False, rng=None):
        pre, cols = _conv_batch(x, self.kernel, self.bias)
        y = relu(pre) if self.use_relu else pre
        return y, (cols, x.shape, pre if self.use_relu else None)

    def backward(self, cache, dy):
        cols, x_shape, pre = cache
        if pre is not None:
            dy = relu_backward(pre, dy)
        dx, dk, db = _conv_batch_backward(cols, x_shape, self.kernel, dy)
        return dx, [dk, db]


class MaxPool2D:
    def params(self):
        return []

    def forward(self, x, train=False, rng=None):
        y, argmax = _maxpool_batch(x)
        return y, argmax

    def backward(self, cache, dy):
        return _maxpool_batch_backward(cache, dy), []


class Dropout:
    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def params(self):
        return []

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ConfigError("train-mode dropout needs an rng")
        mask = _dropout_mask(x.shape, self.rate, rng, x.dtype)
        scale = x.dtype.type(1.0 / (1.0 - self.rate))
        return x * mask * scale, (mask, scale)

    def backward(self, cache, dy):
        if cache is None:
            return dy, []
        mask, scale = cache
        return dy * mask * scale, []


class Flatten:
    def params(self):
        return []

    def forward(self, x, train=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, dy):
        return dy.reshape(cache), []


class Dense:
    """Affine layer with optional fused ReLU."""

    def __init__(self, n_in, n_out, rng, dtype=np.float32, use_relu=True):
        limit = np.sqrt(6.0 / (n_in + n_out))
        self.weights = rng.uniform(-limit, limit, (n_in, n_out)).astype(dtype)
        self.bias = np.zeros(n_out, dtype=dtype)
        self.use_relu = use_relu

    def params(self):
        return [self.weights, self.bias]

    def forward(self, x, train=False, rng=None):
        if x.shape[-1] != self.weights.shape[0]:
            raise ShapeError(
                f"input width {x.shape[-1]} != weight rows {self.weights.shape[0]}"
            )
        pre = x @ self.weights + self.bias
        y = relu(pre) if self.use_relu else pre
        return y, (x, pre if self.use_relu else None)

    def backward(self, cache, dy):
        x, pre = cache
        if pre is not None:
            dy = relu_backward(pre, dy)
        dx = dy @ self.weights.T
        return dx, [x.T @ dy, dy.sum(axis=0)]


# ---------------------------------------------------------------------------
# the network

@dataclass
class ForwardCache:
    net: "Network"
    train: bool
    single: bool
    batch_size: int
    layer_caches: list
    shapes: list  # per-layer output shapes, batch axis dropped


class Network:
    """Layer stack with seeded init and an owned dropout stream.

    Layers and parameters are plain attributes; inference (train=False)
    never mutates the network, so a loaded model can be shared across
    threads.  Training consumes self.dropout_rng in layer order, which
    makes same-seed runs reproduce bit for bit.
    """

    def __init__(self, layers, class_count, input_shape, seed, dtype, arch):
        self.layers = layers
        self.class_count = class_count
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.arch = arch
        self.dropout_rng = philox_stream(seed, STREAM_DROPOUT)

    def parameters(self):
        return [p for layer in self.layers for p in layer.params()]

    @property
    def norm_stats(self):
        norm = self.layers[1]
        return norm.mean, norm.variance

    def set_norm_stats(self, mean, variance):
        self.layers[1].set_stats(mean, variance)

    def resize_images(self, images):
        """Just the resize stage, for fitting pixel statistics."""
        x = self._coerce(images)[0]
        return self.layers[0].forward(x)[0]

    def _coerce(self, images):
        x = np.asarray(images, dtype=self.dtype)
        orig = x.shape
        single = x.ndim == 3
        if single:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ShapeError(f"expected input shape {self.input_shape}, got {orig}")
        return x, single

    def forward(self, images, train: bool = False):
        """Run the stack; returns (logits, cache) with cache feeding backward."""
        x, single = self._coerce(images)
        caches = []
        shapes = []
        for layer in self.layers:
            x, c = layer.forward(x, train=train, rng=self.dropout_rng)
            caches.append(c)
            shapes.append(x.shape[1:])
        logits = x[0] if single else x
        return logits, ForwardCache(self, train, single, x.shape[0], caches, shapes)

    def backward(self, cache: ForwardCache, dlogits):
        """Gradients for every parameter, aligned with parameters()."""
        if not isinstance(cache, ForwardCache) or cache.net is not self:
            raise ConsistencyError("cache does not belong to this network")
        dy = np.asarray(dlogits, dtype=self.dtype)
        if cache.single:
            if dy.shape != (self.class_count,):
                raise ConsistencyError(
                    f"dlogits shape {dy.shape} does not match cached forward "
                    f"({(self.class_count,)})"
                )
            dy = dy[None]
        elif dy.shape != (cache.batch_size, self.class_count):
            raise ConsistencyError(
                f"dlogits shape {dy.shape} does not match cached forward "
                f"({(cache.batch_size, self.class_count)})"
            )
        grads_per_layer = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            dy, g = self.layers[i].backward(cache.layer_caches[i], dy)
            grads_per_layer[i] = g
        return [g for layer_grads in grads_per_layer for g in layer_grads]


def build_network(
    class_count: int,
    input_shape=(124, 129, 1),
    resize=(32, 32),
    conv_filters=(32, 64),
    kernel_size: int = 3,
    dense_units: int = 128,
    dropout_rates=(0.25, 0.5),
    seed: int = 0,
    dtype=np.float32,
) -> Network:
    """Assemble the standard stack with Glorot-uniform weights.

    Weight draws come from the init stream of `seed` in layer order
    (conv1, conv2, dense1, dense2); biases start at zero.
    """
    if class_count < 2:
        raise ConfigError(f"need at least 2 classes, got {class_count}")
    in_h, in_w, in_c = input_shape
    rh, rw = resize
    f1, f2 = conv_filters
    k = kernel_size

    h, w = rh - k + 1, rw - k + 1   # conv1
    h, w = h - k + 1, w - k + 1     # conv2
    if h < 1 or w < 1:
        raise ConfigError(f"resize target {resize} too small for two {k}x{k} convs")
    if h % 2 or w % 2:
        raise ConfigError(f"conv output {h}x{w} not divisible by the 2x2 pool")
    flat = (h // 2) * (w // 2) * f2

    rng = philox_stream(seed, STREAM_INIT)
    layers = [
        Resize(in_h, in_w, rh, rw, dtype=dtype),
        Normalize(),
        Conv2D(in_c, f1, k, rng, dtype=dtype),
        Conv2D(f1, f2, k, rng, dtype=dtype),
        MaxPool2D(),
        Dropout(dropout_rates[0]),
        Flatten(),
        Dense(flat, dense_units, rng, dtype=dtype),
        Dropout(dropout_rates[1]),
        Dense(dense_units, class_count, rng, dtype=dtype, use_relu=False),
    ]
    arch = {
        "input_shape": list(input_shape),
        "resize": list(resize),
        "conv_filters": list(conv_filters),
        "kernel_size": kernel_size,
        "dense_units": dense_units,
        "dropout_rates": list(dropout_rates),
        "class_count": class_count,
    }
    return Network(layers, class_count, input_shape, seed, dtype, arch)


def network_forward(net: Network, image: np.ndarray, mode: str = "infer"):
    """Forward one image through the stack -> (logits, cache)."""
    train = _check_mode(mode)
    x = np.asarray(image)
    if x.shape != net.input_shape:
        raise ShapeError(f"expected input shape {net.input_shape}, got {x.shape}")
    return net.forward(x, train=train)


def network_backward(net: Network, cache: ForwardCache, dlogits: np.ndarray):
    """Backprop a logits cotangent -> gradients aligned with parameters()."""
    return net.backward(cache, dlogits)
