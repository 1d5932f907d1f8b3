"""Reverse-mode autodiff over dense numpy arrays.

The graph is built eagerly: creating an op node computes its forward value
immediately and records two closures, one that recomputes the forward value
from the current parent values and one that maps an incoming cotangent to
cotangents for the parents. `evaluate_graph` re-runs the forward closures in
topological order, which is what the finite-difference checker leans on:
perturb a leaf, re-evaluate, read the scalar.

Precision follows the inputs: float32 for training, float64 when
finite-difference verification needs the headroom.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for a primitive."""


class NonFiniteError(ArithmeticError):
    """Raised when a graph value turns non-finite; carries the node name."""


class Tensor:
    """A node in the computation graph.

    Leaves hold data (parameters, inputs); op nodes additionally hold their
    parents and the forward/adjoint closures. `grad` is populated on
    requires_grad leaves by `backward` and accumulates across calls until
    reset to None.
    """

    __slots__ = ("values", "parents", "requires_grad", "grad", "name", "_fwd", "_vjp")

    def __init__(self, values, requires_grad=False, name=None, dtype=None):
        v = np.asarray(values, dtype=dtype)
        if v.dtype not in (np.float32, np.float64):
            v = v.astype(DEFAULT_DTYPE)
        self.values = v
        self.parents = ()
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._fwd = None
        self._vjp = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def size(self):
        return self.values.size

    def detach(self):
        return Tensor(self.values, requires_grad=False, name=self.name)

    def __repr__(self):
        tag = self.name or ("op" if self.parents else "leaf")
        return f"Tensor({tag}, shape={self.values.shape}, dtype={self.values.dtype})"

    # graph-building sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Trainable leaf tensor."""

    def __init__(self, values, name=None, dtype=None):
        super().__init__(values, requires_grad=True, name=name, dtype=dtype)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.values.dtype if isinstance(like, Tensor) else None
    return Tensor(np.asarray(x, dtype=dtype))


def _node(name, parents, fwd, vjp):
    t = Tensor.__new__(Tensor)
    t.values = fwd()
    t.parents = tuple(parents)
    t.requires_grad = any(p.requires_grad for p in parents)
    t.grad = None
    t.name = name
    t._fwd = fwd
    t._vjp = vjp
    return t


def _toposort(root):
    """Parents-first ordering; iterative so deep graphs don't hit the
    recursion limit. Each node appears exactly once."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def evaluate_graph(root):
    """Recompute the forward pass from current leaf values; returns the
    root's value array. Deterministic given leaf values and any per-node
    state fixed at construction (dropout masks)."""
    for node in _toposort(root):
        if node._fwd is not None:
            node.values = node._fwd()
    return root.values


def backward(root):
    """Reverse-mode sweep from a scalar root.

    Populates `.grad` on every requires_grad leaf reached (accumulating if a
    grad is already present) and returns a dict {leaf: grad array}. A fully
    detached root is a no-op and returns an empty map, not an error.
    """
    if root.values.size != 1:
        raise ShapeError(f"backward requires a scalar root, got shape {root.values.shape}")
    leaf_grads = {}
    if not root.requires_grad:
        return leaf_grads
    order = _toposort(root)
    grads = {id(root): np.ones_like(root.values)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None or not node.requires_grad:
            continue
        if node._vjp is None:
            node.grad = g if node.grad is None else node.grad + g
            leaf_grads[node] = node.grad
            continue
        for p, pg in zip(node.parents, node._vjp(g)):
            if pg is None or not p.requires_grad:
                continue
            k = id(p)
            # never accumulate in place: a vjp may hand back a view of g
            grads[k] = grads[k] + pg if k in grads else pg
    return leaf_grads


def find_nonfinite(root):
    """Name of the first node (topological order) with a non-finite value,
    or None if the graph is clean."""
    for node in _toposort(root):
        if not np.all(np.isfinite(node.values)):
            return node.name or "unnamed"
    return None


def _unbroadcast(g, shape):
    """Sum a cotangent down to `shape` (the adjoint of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    _check_broadcast("add", a, b)

    def fwd():
        return a.values + b.values

    def vjp(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)

    return _node("add", (a, b), fwd, vjp)


def sub(a, b):
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    _check_broadcast("sub", a, b)

    def fwd():
        return a.values - b.values

    def vjp(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)

    return _node("sub", (a, b), fwd, vjp)


def mul(a, b):
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    _check_broadcast("mul", a, b)

    def fwd():
        return a.values * b.values

    def vjp(g):
        return (_unbroadcast(g * b.values, a.values.shape),
                _unbroadcast(g * a.values, b.values.shape))

    return _node("mul", (a, b), fwd, vjp)


def neg(x):
    x = _as_tensor(x)

    def fwd():
        return -x.values

    def vjp(g):
        return (-g,)

    return _node("neg", (x,), fwd, vjp)


def _check_broadcast(opname, a, b):
    try:
        np.broadcast_shapes(a.values.shape, b.values.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.values.shape} and {b.values.shape} do not broadcast") from None


def power(x, p):
    """Elementwise x**p for a python scalar p. Non-integer exponents expect
    nonnegative input; at x == 0 the adjoint is clamped to 0 where the true
    one-sided derivative would be unbounded."""
    x = _as_tensor(x)
    p = float(p)

    def fwd():
        xv = x.values
        if p == 2.0:
            return xv * xv
        if p == 0.5:
            return np.sqrt(xv)
        return xv ** p

    def vjp(g):
        xv = x.values
        if p == 0.0:
            return (np.zeros_like(xv),)
        if p == 2.0:
            return (g * (2.0 * xv),)
        if p.is_integer() and p >= 1.0:
            return (g * (p * xv ** (p - 1.0)),)
        base = np.where(xv > 0, xv, 1.0) ** (p - 1.0)
        return (g * np.where(xv > 0, p * base, 0.0).astype(xv.dtype),)

    return _node("power", (x,), fwd, vjp)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(x, shape):
    x = _as_tensor(x)
    shape = tuple(shape)

    def fwd():
        return x.values.reshape(shape)

    def vjp(g):
        return (g.reshape(x.values.shape),)

    return _node("reshape", (x,), fwd, vjp)


def transpose(x, axes):
    x = _as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def fwd():
        return np.transpose(x.values, axes)

    def vjp(g):
        return (np.transpose(g, inverse),)

    return _node("transpose", (x,), fwd, vjp)


def concat(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    nd = tensors[0].values.ndim
    ax = axis % nd

    def fwd():
        return np.concatenate([t.values for t in tensors], axis=ax)

    def vjp(g):
        out = []
        start = 0
        for t in tensors:
            n = t.values.shape[ax]
            sl = [slice(None)] * nd
            sl[ax] = slice(start, start + n)
            out.append(g[tuple(sl)])
            start += n
        return tuple(out)

    return _node("concat", tensors, fwd, vjp)


def narrow(x, axis, start, length):
    """Contiguous slice along one axis; adjoint embeds the cotangent back
    into zeros."""
    x = _as_tensor(x)
    ax = axis % x.values.ndim
    sl = [slice(None)] * x.values.ndim
    sl[ax] = slice(start, start + length)
    sl = tuple(sl)

    def fwd():
        return x.values[sl]

    def vjp(g):
        out = np.zeros_like(x.values)
        out[sl] = g
        return (out,)

    return _node("narrow", (x,), fwd, vjp)


# ---------------------------------------------------------------------------
# reductions


def _reduce_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def tsum(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    axes = _reduce_axes(axis, x.values.ndim)

    def fwd():
        return x.values.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            for a in sorted(axes):
                g = np.expand_dims(g, a)
        return (np.broadcast_to(g, x.values.shape),)

    return _node("sum", (x,), fwd, vjp)


def tmean(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    axes = _reduce_axes(axis, x.values.ndim)

    def fwd():
        return x.values.mean(axis=axes, keepdims=keepdims)

    def vjp(g):
        n = 1
        for a in axes:
            n *= x.values.shape[a]
        if not keepdims:
            for a in sorted(axes):
                g = np.expand_dims(g, a)
        return (np.broadcast_to(g / n, x.values.shape),)

    return _node("mean", (x,), fwd, vjp)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """np.matmul semantics restricted to the two cases the models use:
    a (..., m, k) @ b (k, n), and equal-batch a (..., m, k) @ b (..., k, n)."""
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.values, b.values
    if av.shape[-1] != bv.shape[-2 if bv.ndim > 1 else 0]:
        raise ShapeError(f"matmul: inner dims disagree for {av.shape} @ {bv.shape}")
    if bv.ndim > 2 and av.shape[:-2] != bv.shape[:-2]:
        raise ShapeError(f"matmul: batch dims disagree for {av.shape} @ {bv.shape}")

    def fwd():
        return np.matmul(a.values, b.values)

    def vjp(g):
        av, bv = a.values, b.values
        if bv.ndim == 2:
            da = np.matmul(g, bv.T)
            k, n = bv.shape
            db = av.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            da = np.matmul(g, np.swapaxes(bv, -1, -2))
            db = np.matmul(np.swapaxes(av, -1, -2), g)
        return da, db

    return _node("matmul", (a, b), fwd, vjp)


# ---------------------------------------------------------------------------
# activations


def sigmoid(x):
    x = _as_tensor(x)
    out = {}

    def fwd():
        # tanh form is stable for large |x| and costs a single pass
        y = 0.5 * (np.tanh(0.5 * x.values) + 1.0)
        out["y"] = y
        return y

    def vjp(g):
        y = out["y"]
        return (g * (y * (1.0 - y)),)

    return _node("sigmoid", (x,), fwd, vjp)


def swish(x):
    """x * sigmoid(x), built from primitives."""
    return mul(x, sigmoid(x))


def glu(x, axis=-1):
    """Gated linear unit: first half of `axis` gated by the sigmoid of the
    second half."""
    x = _as_tensor(x)
    n = x.values.shape[axis]
    if n % 2:
        raise ShapeError(f"glu: axis length {n} is odd")
    a = narrow(x, axis, 0, n // 2)
    b = narrow(x, axis, n // 2, n // 2)
    return mul(a, sigmoid(b))


def prelu(x, slope):
    """PReLU with a learnable slope broadcastable against x (per-channel or
    per-frequency)."""
    x, slope = _as_tensor(x), _as_tensor(slope)

    def fwd():
        xv = x.values
        return np.where(xv > 0, xv, slope.values * xv)

    def vjp(g):
        xv = x.values
        dx = np.where(xv > 0, g, np.asarray(slope.values * g, dtype=g.dtype))
        ds = _unbroadcast(np.where(xv > 0, 0.0, xv).astype(g.dtype) * g, slope.values.shape)
        return dx, ds

    return _node("prelu", (x, slope), fwd, vjp)


def tcos(x):
    x = _as_tensor(x)

    def fwd():
        return np.cos(x.values)

    def vjp(g):
        return (-np.sin(x.values) * g,)

    return _node("cos", (x,), fwd, vjp)


def tsin(x):
    x = _as_tensor(x)

    def fwd():
        return np.sin(x.values)

    def vjp(g):
        return (np.cos(x.values) * g,)

    return _node("sin", (x,), fwd, vjp)


def tabs(x):
    x = _as_tensor(x)

    def fwd():
        return np.abs(x.values)

    def vjp(g):
        return (np.sign(x.values) * g,)

    return _node("abs", (x,), fwd, vjp)


def softmax(x):
    """Softmax over the last axis."""
    x = _as_tensor(x)
    out = {}

    def fwd():
        xv = x.values
        e = np.exp(xv - xv.max(axis=-1, keepdims=True))
        y = e / e.sum(axis=-1, keepdims=True)
        out["y"] = y
        return y

    def vjp(g):
        y = out["y"]
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node("softmax", (x,), fwd, vjp)


# ---------------------------------------------------------------------------
# normalization


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then apply the (C,) affine pair."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    cache = {}

    def fwd():
        xv = x.values
        mu = xv.mean(axis=-1, keepdims=True)
        xc = xv - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xh = xc * inv
        cache["xh"], cache["inv"] = xh, inv
        return xh * gamma.values + beta.values

    def vjp(g):
        xh, inv = cache["xh"], cache["inv"]
        dgamma = _unbroadcast(g * xh, gamma.values.shape)
        dbeta = _unbroadcast(g, beta.values.shape)
        dxh = g * gamma.values
        m1 = dxh.mean(axis=-1, keepdims=True)
        m2 = (dxh * xh).mean(axis=-1, keepdims=True)
        dx = inv * (dxh - m1 - xh * m2)
        return dx, dgamma, dbeta

    return _node("layer_norm", (x, gamma, beta), fwd, vjp)


def instance_norm(x, gamma, beta, axes=(1, 2), eps=1e-5):
    """Per-sample, per-channel normalization over `axes` with a (C,) affine
    pair on the trailing channel axis."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    axes = tuple(axes)
    cache = {}

    def fwd():
        xv = x.values
        mu = xv.mean(axis=axes, keepdims=True)
        xc = xv - mu
        var = (xc * xc).mean(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xh = xc * inv
        cache["xh"], cache["inv"] = xh, inv
        return xh * gamma.values + beta.values

    def vjp(g):
        xh, inv = cache["xh"], cache["inv"]
        dgamma = _unbroadcast(g * xh, gamma.values.shape)
        dbeta = _unbroadcast(g, beta.values.shape)
        dxh = g * gamma.values
        m1 = dxh.mean(axis=axes, keepdims=True)
        m2 = (dxh * xh).mean(axis=axes, keepdims=True)
        dx = inv * (dxh - m1 - xh * m2)
        return dx, dgamma, dbeta

    return _node("instance_norm", (x, gamma, beta), fwd, vjp)


# ---------------------------------------------------------------------------
# convolutions

def _same_pad(kernel, dilation, stride, n):
    """TF-style 'same' padding: output length ceil(n / stride)."""
    eff = (kernel - 1) * dilation + 1
    out = -(-n // stride)
    total = max(0, (out - 1) * stride + eff - n)
    return total // 2, total - total // 2


def conv2d(x, w, bias=None, stride=(1, 1), dilation=(1, 1), padding="same"):
    """2-D convolution (cross-correlation) in channels-last layout.

    x: (B, H, W, Cin), w: (kh, kw, Cin, Cout). `padding` is "same"
    (stride-aware, output ceil(n/stride)) or explicit ((top, bottom),
    (left, right)). Implemented as one GEMM per kernel tap, which is the
    fastest arrangement for small kernels under a single-threaded BLAS.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.values.ndim != 4 or w.values.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D x and w, got {x.values.shape} and {w.values.shape}")
    if x.values.shape[-1] != w.values.shape[2]:
        raise ShapeError(f"conv2d: input channels {x.values.shape[-1]} != kernel channels {w.values.shape[2]}")
    kh, kw = w.values.shape[:2]
    sh, sw = stride
    dh, dw_ = dilation

    def geometry(shape):
        B, H, W, _ = shape
        if padding == "same":
            ph = _same_pad(kh, dh, sh, H)
            pw = _same_pad(kw, dw_, sw, W)
        else:
            ph, pw = padding
        Ho = (H + ph[0] + ph[1] - ((kh - 1) * dh + 1)) // sh + 1
        Wo = (W + pw[0] + pw[1] - ((kw - 1) * dw_ + 1)) // sw + 1
        if Ho < 1 or Wo < 1:
            raise ShapeError(f"conv2d: kernel {(kh, kw)} dilation {(dh, dw_)} does not fit input {shape}")
        return ph, pw, Ho, Wo

    def tap_view(xp, i, j, Ho, Wo):
        return xp[:, i * dh: i * dh + (Ho - 1) * sh + 1: sh,
                  j * dw_: j * dw_ + (Wo - 1) * sw + 1: sw, :]

    def fwd():
        xv, wv = x.values, w.values
        B, H, W, Ci = xv.shape
        ph, pw, Ho, Wo = geometry(xv.shape)
        xp = np.pad(xv, ((0, 0), ph, pw, (0, 0)))
        out = np.zeros((B * Ho * Wo, wv.shape[3]), dtype=xv.dtype)
        for i in range(kh):
            for j in range(kw):
                patch = np.ascontiguousarray(tap_view(xp, i, j, Ho, Wo)).reshape(-1, Ci)
                out += patch @ wv[i, j]
        return out.reshape(B, Ho, Wo, wv.shape[3])

    def vjp(g):
        xv, wv = x.values, w.values
        B, H, W, Ci = xv.shape
        Co = wv.shape[3]
        ph, pw, Ho, Wo = geometry(xv.shape)
        xp = np.pad(xv, ((0, 0), ph, pw, (0, 0)))
        g2 = np.ascontiguousarray(g).reshape(-1, Co)
        dw = np.empty_like(wv)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                patch = np.ascontiguousarray(tap_view(xp, i, j, Ho, Wo)).reshape(-1, Ci)
                dw[i, j] = patch.T @ g2
                tap_view(gxp, i, j, Ho, Wo)[...] += (g2 @ wv[i, j].T).reshape(B, Ho, Wo, Ci)
        dx = gxp[:, ph[0]: ph[0] + H, pw[0]: pw[0] + W, :]
        return dx, dw

    out = _node("conv2d", (x, w), fwd, vjp)
    if bias is not None:
        out = add(out, bias)
    return out


def depthwise_conv1d(x, w, bias=None):
    """Per-channel 1-D convolution over axis 1 of (N, L, C) with 'same'
    zero padding; w has shape (k, C)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.values.shape[-1] != w.values.shape[-1]:
        raise ShapeError(f"depthwise_conv1d: channels {x.values.shape[-1]} != kernel channels {w.values.shape[-1]}")
    k = w.values.shape[0]
    p0, p1 = (k - 1) // 2, k - 1 - (k - 1) // 2

    def fwd():
        xv, wv = x.values, w.values
        L = xv.shape[1]
        xp = np.pad(xv, ((0, 0), (p0, p1), (0, 0)))
        out = np.zeros_like(xv)
        for t in range(k):
            out += xp[:, t: t + L, :] * wv[t]
        return out

    def vjp(g):
        xv, wv = x.values, w.values
        L = xv.shape[1]
        xp = np.pad(xv, ((0, 0), (p0, p1), (0, 0)))
        dw = np.empty_like(wv)
        gxp = np.zeros_like(xp)
        for t in range(k):
            dw[t] = (g * xp[:, t: t + L, :]).sum(axis=(0, 1))
            gxp[:, t: t + L, :] += g * wv[t]
        dx = gxp[:, p0: p0 + L, :]
        return dx, dw

    out = _node("depthwise_conv1d", (x, w), fwd, vjp)
    if bias is not None:
        out = add(out, bias)
    return out


def overlap_add(frames, hop):
    """Scatter-add (B, T, W) frames at multiples of `hop` into
    (B, (T-1)*hop + W). The adjoint gathers frames back out."""
    frames = _as_tensor(frames)
    if frames.values.ndim != 3:
        raise ShapeError(f"overlap_add: expected (B, T, W) frames, got {frames.values.shape}")

    def fwd():
        fv = frames.values
        B, T, W = fv.shape
        out = np.zeros((B, (T - 1) * hop + W), dtype=fv.dtype)
        for t in range(T):
            out[:, t * hop: t * hop + W] += fv[:, t]
        return out

    def vjp(g):
        B, T, W = frames.values.shape
        gf = np.empty_like(frames.values)
        for t in range(T):
            gf[:, t] = g[:, t * hop: t * hop + W]
        return (gf,)

    return _node("overlap_add", (frames,), fwd, vjp)


def dropout(x, rate, rng, training):
    """Inverted dropout. The mask is sampled once at construction so that
    graph re-evaluation is deterministic; eval mode returns x itself."""
    x = _as_tensor(x)
    if not training or rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.values.shape) < keep).astype(x.values.dtype) / np.asarray(keep, dtype=x.values.dtype)

    def fwd():
        return x.values * mask

    def vjp(g):
        return (g * mask,)

    return _node("dropout", (x,), fwd, vjp)


# ---------------------------------------------------------------------------
# verification


def grad_check(root, leaves, step=1e-5, max_entries=None, rng=None):
    """Max relative error between backward gradients and central finite
    differences at the given leaves.

    Run in float64; `step` should sit in [1e-6, 1e-4]. When `max_entries`
    is set, that many entries per leaf are probed (deterministically from
    `rng`), otherwise every entry is.
    """
    bad = find_nonfinite(root)
    if bad is not None:
        raise NonFiniteError(f"non-finite forward value in '{bad}'")
    if isinstance(leaves, Tensor):
        leaves = [leaves]
    for leaf in leaves:
        leaf.grad = None
    backward(root)
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.values)
        flat = leaf.values.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            idxs = rng.choice(n, size=max_entries, replace=False)
        else:
            idxs = range(n)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + step
            fp = float(evaluate_graph(root))
            flat[i] = orig - step
            fm = float(evaluate_graph(root))
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * step)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    evaluate_graph(root)
    return worst


# Registered primitives: every entry has a forward rule and an adjoint rule
# exercised by the finite-difference suite in checks.py.
OP_REGISTRY = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "neg": neg,
    "power": power,
    "matmul": matmul,
    "conv2d": conv2d,
    "depthwise_conv1d": depthwise_conv1d,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "narrow": narrow,
    "sum": tsum,
    "mean": tmean,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "instance_norm": instance_norm,
    "prelu": prelu,
    "glu": glu,
    "swish": swish,
    "sigmoid": sigmoid,
    "cos": tcos,
    "sin": tsin,
    "abs": tabs,
    "dropout": dropout,
    "overlap_add": overlap_add,
}
