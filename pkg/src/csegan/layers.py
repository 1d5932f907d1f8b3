"""Neural layers over the autograd engine.

Lightweight module system: submodules and Parameters are registered
automatically via attribute assignment, which is enough for parameter
collection, counting and checkpoint naming.
"""

from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .autograd import Parameter


class Module:
    def __setattr__(self, key, value):
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            name = key if not prefix else f"{prefix}.{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_params(self):
        return sum(p.values.size for p in self.parameters())

    def zero_grads(self):
        for p in self.parameters():
            p.grad = None

    def set_values(self, named_values, strict=True):
        """Load a {name: array} mapping into this module's parameters."""
        own = dict(self.named_parameters())
        for name, arr in named_values.items():
            if name not in own:
                if strict:
                    raise KeyError(f"unknown parameter '{name}'")
                continue
            p = own[name]
            if p.values.shape != arr.shape:
                raise ValueError(f"parameter '{name}' shape {p.values.shape} != stored {arr.shape}")
            p.values = np.asarray(arr, dtype=p.values.dtype)


def he_normal(rng, shape, fan_in, dtype):
    std = math.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2d(Module):
    """Channels-last 2-D convolution; weight (kh, kw, cin, cout)."""

    def __init__(self, cin, cout, kernel, rng, stride=(1, 1), dilation=(1, 1),
                 padding="same", bias=True, dtype=np.float32):
        kh, kw = kernel
        self.stride = stride
        self.dilation = dilation
        self.padding = padding
        self.weight = Parameter(he_normal(rng, (kh, kw, cin, cout), kh * kw * cin, dtype))
        self.bias = Parameter(np.zeros(cout, dtype=dtype)) if bias else None

    def __call__(self, x):
        return ag.conv2d(x, self.weight, bias=self.bias,
                         stride=self.stride, dilation=self.dilation, padding=self.padding)


class DepthwiseConv1d(Module):
    def __init__(self, channels, kernel, rng, dtype=np.float32):
        self.weight = Parameter(he_normal(rng, (kernel, channels), kernel, dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype))

    def __call__(self, x):
        return ag.depthwise_conv1d(x, self.weight, bias=self.bias)


class Linear(Module):
    def __init__(self, din, dout, rng, bias=True, dtype=np.float32):
        self.weight = Parameter(glorot_uniform(rng, (din, dout), din, dout, dtype))
        self.bias = Parameter(np.zeros(dout, dtype=dtype)) if bias else None

    def __call__(self, x):
        out = ag.matmul(x, self.weight)
        if self.bias is not None:
            out = ag.add(out, self.bias)
        return out


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float32, eps=1e-5):
        self.eps = eps
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))

    def __call__(self, x):
        return ag.layer_norm(x, self.gamma, self.beta, eps=self.eps)


class InstanceNorm2d(Module):
    """Normalizes each (sample, channel) map over the two spatial axes of a
    (B, H, W, C) tensor, with a learnable per-channel affine."""

    def __init__(self, channels, dtype=np.float32, eps=1e-5):
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))

    def __call__(self, x):
        return ag.instance_norm(x, self.gamma, self.beta, axes=(1, 2), eps=self.eps)


class PReLU(Module):
    """Learnable-slope rectifier; `shape` sets the slope layout (e.g. (C,)
    per channel, (F, 1) per frequency band)."""

    def __init__(self, shape, init=0.2, dtype=np.float32):
        if isinstance(shape, int):
            shape = (shape,)
        self.slope = Parameter(np.full(shape, init, dtype=dtype))

    def __call__(self, x):
        return ag.prelu(x, self.slope)


class Dropout(Module):
    def __init__(self, rate):
        self.rate = rate

    def __call__(self, x, rng=None, training=False):
        if training and self.rate > 0.0 and rng is None:
            raise ValueError("dropout in training mode needs an rng")
        return ag.dropout(x, self.rate, rng, training)


class ConvBlock(Module):
    """Convolution -> instance normalization -> PReLU."""

    def __init__(self, cin, cout, kernel, rng, stride=(1, 1), dilation=(1, 1), dtype=np.float32):
        self.conv = Conv2d(cin, cout, kernel, rng, stride=stride, dilation=dilation, dtype=dtype)
        self.norm = InstanceNorm2d(cout, dtype=dtype)
        self.act = PReLU(cout, dtype=dtype)

    def __call__(self, x):
        return self.act(self.norm(self.conv(x)))


class MultiHeadSelfAttention(Module):
    """Standard scaled dot-product self-attention over (N, S, C)."""

    def __init__(self, dim, heads, rng, dtype=np.float32):
        if dim % heads:
            raise ValueError(f"attention dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = Linear(dim, dim, rng, dtype=dtype)
        self.wk = Linear(dim, dim, rng, dtype=dtype)
        self.wv = Linear(dim, dim, rng, dtype=dtype)
        self.wo = Linear(dim, dim, rng, dtype=dtype)

    def _split(self, x, n, s):
        x = ag.reshape(x, (n, s, self.heads, self.head_dim))
        return ag.transpose(x, (0, 2, 1, 3))

    def __call__(self, x):
        n, s, c = x.values.shape
        q = self._split(self.wq(x), n, s)
        k = self._split(self.wk(x), n, s)
        v = self._split(self.wv(x), n, s)
        scores = ag.matmul(q, ag.transpose(k, (0, 1, 3, 2)))
        scores = ag.mul(scores, 1.0 / math.sqrt(self.head_dim))
        attn = ag.softmax(scores)
        ctx = ag.matmul(attn, v)
        ctx = ag.reshape(ag.transpose(ctx, (0, 2, 1, 3)), (n, s, c))
        return self.wo(ctx)
