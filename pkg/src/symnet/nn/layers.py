"""Layers with explicit forward/backward passes.

Each layer caches what its backward pass needs during ``forward`` and
returns the input gradient from ``backward``.  Parameter gradients are
accumulated into the layer's weight sources.  Parameters are stored in f64;
the compute dtype follows the input (f32 inputs run f32 GEMMs).
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError
from .params import DenseWeight, ParamGroup


class Layer:
    kind = "layer"

    def forward(self, x, train=True):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError

    def children(self):
        return []

    def weight_sources(self):
        """Weight sources owned by this layer (not its children)."""
        return []

    def extra_groups(self):
        """Parameter groups not behind a weight source (biases, BN affine)."""
        return []

    def walk(self):
        yield self
        for c in self.children():
            yield from c.walk()


class Linear(Layer):
    kind = "linear"

    def __init__(self, weight, bias=True, name="linear"):
        self.name = name
        self.weight = weight
        self.bias = ParamGroup(f"{name}.b", np.zeros(weight.shape[0])) if bias else None

    def weight_sources(self):
        return [self.weight]

    def extra_groups(self):
        return [self.bias] if self.bias is not None else []

    def forward(self, x, train=True):
        W = self.weight.value().astype(x.dtype, copy=False)
        if x.shape[-1] != W.shape[1]:
            raise DimensionError(f"{self.name}: input has {x.shape[-1]} features, expected {W.shape[1]}")
        self._x, self._W = x, W
        y = x @ W.T
        if self.bias is not None:
            y = y + self.bias.value.astype(x.dtype, copy=False)
        return y

    def backward(self, g):
        x = self._x
        x2 = x.reshape(-1, x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        self.weight.accumulate(g2.T @ x2)
        if self.bias is not None:
            self.bias.grad += g2.sum(axis=0)
        return g @ self._W


class Conv2d(Layer):
    """im2col convolution: one GEMM over the unfolded batch."""

    kind = "conv2d"

    def __init__(self, weight, stride=1, pad=0, name="conv"):
        self.name = name
        self.weight = weight
        self.stride = stride
        self.pad = pad

    def weight_sources(self):
        return [self.weight]

    def _unfold(self, x, k):
        s, p = self.stride, self.pad
        B, C, H, W = x.shape
        # floor semantics, as in common frameworks (a stride-2 3x3 on an even map
        # is non-integral under the strict tensor-core rule)
        if H + 2 * p < k or W + 2 * p < k:
            raise DimensionError(f"{self.name}: {H}x{W} input smaller than {k}x{k} kernel")
        ho = (H + 2 * p - k) // s + 1
        wo = (W + 2 * p - k) // s + 1
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
        # (B, C, ho, wo, k, k) -> (C, k, k, B, ho, wo)
        col = np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(C * k * k, B * ho * wo)
        return col, ho, wo

    def forward(self, x, train=True):
        W = self.weight.value().astype(x.dtype, copy=False)
        O, C, k, _ = W.shape
        if x.ndim != 4 or x.shape[1] != C:
            raise DimensionError(f"{self.name}: expected (B, {C}, H, W) input, got {x.shape}")
        col, ho, wo = self._unfold(x, k)
        y = W.reshape(O, -1) @ col
        self._cache = (x.shape, col, W, ho, wo)
        return np.ascontiguousarray(y.reshape(O, x.shape[0], ho, wo).transpose(1, 0, 2, 3))

    def backward(self, g):
        xshape, col, W, ho, wo = self._cache
        O, C, k, _ = W.shape
        B = xshape[0]
        gm = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(O, -1)
        self.weight.accumulate((gm @ col.T).reshape(W.shape))
        dcol = (W.reshape(O, -1).T @ gm).reshape(C, k, k, B, ho, wo)
        s, p = self.stride, self.pad
        H, Wd = xshape[2], xshape[3]
        dx = np.zeros((B, C, H + 2 * p, Wd + 2 * p), dtype=g.dtype)
        for ki in range(k):
            for kj in range(k):
                dx[:, :, ki:ki + s * ho:s, kj:kj + s * wo:s] += dcol[:, ki, kj].transpose(1, 0, 2, 3)
        if p:
            dx = dx[:, :, p:p + H, p:p + Wd]
        return dx


class BatchNorm2d(Layer):
    kind = "batchnorm2d"

    def __init__(self, channels, name="bn", momentum=0.1, eps=1e-5):
        self.name = name
        self.gamma = ParamGroup(f"{name}.gamma", np.ones(channels), weight_decay=False)
        self.beta = ParamGroup(f"{name}.beta", np.zeros(channels), weight_decay=False)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def extra_groups(self):
        return [self.gamma, self.beta]

    def forward(self, x, train=True):
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = x.size // x.shape[1]
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var * m / max(m - 1, 1)
        else:
            mean, var = self.running_mean, self.running_var
        dt = x.dtype
        inv = (1.0 / np.sqrt(var + self.eps)).astype(dt, copy=False)
        xhat = (x - mean.astype(dt, copy=False)[None, :, None, None]) * inv[None, :, None, None]
        self._cache = (xhat, inv)
        gamma, beta = self.gamma.value.astype(dt, copy=False), self.beta.value.astype(dt, copy=False)
        return xhat * gamma[None, :, None, None] + beta[None, :, None, None]

    def backward(self, g):
        xhat, inv = self._cache
        self.gamma.grad += (g * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += g.sum(axis=(0, 2, 3))
        gx = g * self.gamma.value.astype(g.dtype, copy=False)[None, :, None, None]
        m = g.size // g.shape[1]
        mean_g = gx.mean(axis=(0, 2, 3))[None, :, None, None]
        mean_gx = (gx * xhat).mean(axis=(0, 2, 3))[None, :, None, None]
        return (gx - mean_g - xhat * mean_gx) * inv[None, :, None, None]


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=True):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return g * self._mask


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, train=True):
        self._y = 1.0 / (1.0 + np.exp(-x))
        return self._y

    def backward(self, g):
        return g * self._y * (1.0 - self._y)


class MaxPool2d(Layer):
    """Non-overlapping k x k max pooling; ties route the gradient to the first max."""

    kind = "maxpool"

    def __init__(self, k=2):
        self.k = k

    def forward(self, x, train=True):
        B, C, H, W = x.shape
        k = self.k
        if H % k or W % k:
            raise DimensionError(f"maxpool {k}: spatial size {H}x{W} not divisible")
        blocks = x.reshape(B, C, H // k, k, W // k, k).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // k, W // k, k * k)
        self._arg = blocks.argmax(axis=-1)
        self._shape = x.shape
        return np.take_along_axis(blocks, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, g):
        B, C, H, W = self._shape
        k = self.k
        blocks = np.zeros((B, C, H // k, W // k, k * k), dtype=g.dtype)
        np.put_along_axis(blocks, self._arg[..., None], g[..., None], axis=-1)
        return blocks.reshape(B, C, H // k, W // k, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)


class GlobalAvgPool(Layer):
    kind = "avgpool"

    def forward(self, x, train=True):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, g):
        B, C, H, W = self._shape
        return np.broadcast_to(g[:, :, None, None] / (H * W), self._shape).copy()


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, p, rng):
        self.p = p
        self.rng = rng

    def forward(self, x, train=True):
        if not train or self.p == 0:
            self._mask = None
            return x
        self._mask = ((self.rng.random(x.shape) >= self.p) / (1.0 - self.p)).astype(x.dtype, copy=False)
        return x * self._mask

    def backward(self, g):
        return g if self._mask is None else g * self._mask


class Embedding(Layer):
    kind = "embedding"

    def __init__(self, vocab, dim, rng, name="encoder"):
        self.name = name
        self.weight = DenseWeight(name, rng.uniform(-0.1, 0.1, size=(vocab, dim)))

    def weight_sources(self):
        return [self.weight]

    def forward(self, tokens, train=True):
        self._tokens = tokens
        return self.weight.value()[tokens]

    def backward(self, g):
        dW = np.zeros(self.weight.shape)
        np.add.at(dW, self._tokens.ravel(), g.reshape(-1, g.shape[-1]))
        self.weight.accumulate(dW)
        return None


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers):
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x, train=True):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g


class Residual(Layer):
    """y = body(x) + shortcut(x); the shortcut may be None (identity)."""

    kind = "residual"

    def __init__(self, body, shortcut=None, pre=None):
        # pre: shared pre-activation applied before both branches (pre-act ResNet)
        self.pre = pre
        self.body = body
        self.shortcut = shortcut

    def children(self):
        return [c for c in (self.pre, self.body, self.shortcut) if c is not None]

    def forward(self, x, train=True):
        h = self.pre.forward(x, train) if self.pre is not None else x
        y = self.body.forward(h, train)
        if self.shortcut is None:
            return y + x
        return y + self.shortcut.forward(h, train)

    def backward(self, g):
        gh = self.body.backward(g)
        if self.shortcut is None:
            gx_direct = g
        else:
            gh = gh + self.shortcut.backward(g)
            gx_direct = 0.0
        gx = self.pre.backward(gh) if self.pre is not None else gh
        return gx + gx_direct
