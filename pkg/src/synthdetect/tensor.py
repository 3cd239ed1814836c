"""Dense tensors with tape-based reverse-mode differentiation.

Each op returns a new Tensor that remembers its parents and a closure mapping
the output gradient to parent gradients. ``backward`` walks that graph in
reverse topological order. Layout is NCHW throughout; convolution is
cross-correlation (kernels are learned, so the flip is unobservable).
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, BackwardStateError, ContractError, NumericalError, ShapeError

_DEFAULT_DTYPE = np.float32


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype new tensors are created with.

    The 64-bit mode exists for gradient checking; training runs at 32 bits.
    """
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.array(data, dtype=dtype or _DEFAULT_DTYPE, copy=True)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self._op = ""
        self._consumed = False

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], backward, op: str) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NumericalError(f"{op} produced non-finite values")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._op = op
        out._consumed = False
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """A leaf tensor that always requires a gradient."""

    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _const(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=like.dtype)


# ---------------------------------------------------------------------------
# reverse pass

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    The recorded graph is released afterwards; a second call on the same
    loss raises BackwardStateError.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise BackwardStateError("graph already consumed by a previous backward(); run a new forward")
    if not loss.requires_grad:
        raise ArgumentError("loss does not depend on any tensor requiring gradients")

    order = _topo_order(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if node._consumed:
                raise BackwardStateError("graph already consumed by a previous backward(); run a new forward")
            if g is not None and node.requires_grad:
                if node.grad is None:
                    node.grad = g.astype(node.data.dtype, copy=True)
                else:
                    node.grad += g
            continue
        if g is None:
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for node in order:
        if node._backward is not None:
            node._backward = None
            node._parents = ()
            node._consumed = True


# ---------------------------------------------------------------------------
# elementwise and reductions

def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = _const(b, a)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(out, (a, b), bw, "add")


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = _const(b, a)
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._result(out, (a, b), bw, "mul")


def tsum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return Tensor._result(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def tmean(x: Tensor) -> Tensor:
    n = x.size
    out = np.asarray(x.data.mean(), dtype=x.dtype)
    return Tensor._result(out, (x,), lambda g: (np.full(x.shape, g / n, dtype=x.dtype),), "mean")


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return Tensor._result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = list(tensors)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise ShapeError(f"cannot concatenate {ref} and {t.shape} along axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def bw(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors)))

    return Tensor._result(out, tensors, bw, "concat")


# ---------------------------------------------------------------------------
# activations

RELU = "relu"
SIGMOID = "sigmoid"


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._result(np.maximum(x.data, 0), (x,), lambda g: (np.where(mask, g, 0),), "relu")


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(z))
    s = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return Tensor._result(s, (x,), lambda g: (g * s * (1 - s),), "sigmoid")


def activation(kind: str, x: Tensor) -> Tensor:
    kind = kind.lower()
    if kind == RELU:
        return relu(x)
    if kind == SIGMOID:
        return sigmoid(x)
    raise ArgumentError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# linear layers

def affine(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """xW + b with x of shape N×D, W of shape D×M, b of shape M."""
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeError(f"affine: cannot multiply {x.shape} by {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise ShapeError(f"affine: bias shape {b.shape} does not match {W.shape[1]} outputs")
    out = x.data @ W.data
    if b is not None:
        out = out + b.data

    def bw(g):
        gx = g @ W.data.T
        gW = x.data.T @ g
        if b is None:
            return gx, gW
        return gx, gW, g.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return Tensor._result(out, parents, bw, "affine")


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _im2col(xt: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Channel-major im2col: xt is C×N×Hp×Wp, result is (C·kh·kw)×(N·oh·ow)."""
    c, n = xt.shape[:2]
    cols = np.empty((c, kh, kw, n, oh, ow), dtype=xt.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols.reshape(c * kh * kw, n * oh * ow)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects N×C×H×W input and F×C×kh×kw kernels, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"conv2d: input has {c} channels, kernels expect {cw}")
    if stride < 1 or padding < 0:
        raise ArgumentError("conv2d: stride must be >= 1 and padding >= 0")
    if kh > h + 2 * padding or kw > wd + 2 * padding:
        raise ShapeError(f"conv2d: kernel {kh}×{kw} larger than padded input {h + 2 * padding}×{wd + 2 * padding}")
    if b is not None and b.shape != (f,):
        raise ShapeError(f"conv2d: bias shape {b.shape}, expected ({f},)")
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(wd, kw, stride, padding)
    xt = x.data.transpose(1, 0, 2, 3)
    if padding:
        xt = np.pad(xt, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = xt.shape[2:]
    cols = _im2col(xt, kh, kw, stride, oh, ow)
    wmat = w.data.reshape(f, -1)
    out = wmat @ cols
    if b is not None:
        out += b.data[:, None]
    # F×N×oh×ow buffer viewed as N×F×oh×ow; the next conv reads it channel-major for free
    out = out.reshape(f, n, oh, ow).transpose(1, 0, 2, 3)

    def bw(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(f, n * oh * ow)
        gw = (g2 @ cols.T).reshape(w.shape)
        gx = None
        if x.requires_grad:
            dcols = (wmat.T @ g2).reshape(c, kh, kw, n, oh, ow)
            gxt = np.zeros((c, n, hp, wp), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxt[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, i, j]
            gx = gxt.transpose(1, 0, 2, 3)
            if padding:
                gx = gx[:, :, padding:padding + h, padding:padding + wd]
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=1)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._result(out, parents, bw, "conv2d")


# ---------------------------------------------------------------------------
# pooling

def maxpool2d(x: Tensor, k: int, stride: int | None = None) -> Tensor:
    """Max over k×k windows, no padding. Ties send the gradient to the first
    (row-major) maximum."""
    stride = k if stride is None else stride
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects N×C×H×W, got {x.shape}")
    n, c, h, w = x.shape
    if k > h or k > w:
        raise ShapeError(f"maxpool2d: window {k} larger than input {h}×{w}")
    oh = conv_output_size(h, k, stride, 0)
    ow = conv_output_size(w, k, stride, 0)
    win = sliding_window_view(x.data, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    win = win.reshape(n, c, oh, ow, k * k)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gx = np.zeros_like(x.data)
        for idx in range(k * k):
            i, j = divmod(idx, k)
            hit = arg == idx
            if hit.any():
                gx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += g * hit
        return (gx,)

    return Tensor._result(np.ascontiguousarray(out), (x,), bw, "maxpool2d")


def avgpool2d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping k×k average pooling; trailing rows/columns are dropped."""
    n, c, h, w = x.shape
    if k > h or k > w:
        raise ShapeError(f"avgpool2d: window {k} larger than input {h}×{w}")
    oh, ow = h // k, w // k
    xv = x.data[:, :, :oh * k, :ow * k].reshape(n, c, oh, k, ow, k)
    out = xv.mean(axis=(3, 5))

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[:, :, :oh * k, :ow * k] = np.repeat(np.repeat(g / (k * k), k, axis=2), k, axis=3)
        return (gx,)

    return Tensor._result(out.astype(x.dtype), (x,), bw, "avgpool2d")


def global_avgpool(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))
    return Tensor._result(out.astype(x.dtype), (x,),
                          lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),),
                          "global_avgpool")


# ---------------------------------------------------------------------------
# normalization and regularization

TRAIN = "train"
EVAL = "eval"


class BatchNormState:
    """Running per-channel statistics for batchnorm2d."""

    def __init__(self, channels: int, momentum: float = 0.1, dtype=None):
        dtype = dtype or _DEFAULT_DTYPE
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
                mode: str = TRAIN, eps: float = 1e-5) -> Tensor:
    if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batchnorm2d: input {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    n, c, h, w = x.shape
    m = n * h * w
    if mode == TRAIN:
        if m < 2:
            raise ArgumentError("batchnorm2d in TRAIN mode needs at least 2 values per channel")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        mom = state.momentum
        # running variance uses the unbiased estimate
        state.running_mean[...] = (1 - mom) * state.running_mean + mom * mean
        state.running_var[...] = (1 - mom) * state.running_var + mom * var * (m / (m - 1))
    elif mode == EVAL:
        mean = state.running_mean
        var = state.running_var
    else:
        raise ArgumentError(f"unknown mode {mode!r}")
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mean[None, :, None, None]) * inv[None, :, None, None]
    out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def bw(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        gxhat = g * gamma.data[None, :, None, None]
        if mode == TRAIN:
            gx = (inv[None, :, None, None] / m) * (
                m * gxhat
                - gxhat.sum(axis=(0, 2, 3))[None, :, None, None]
                - xhat * (gxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
            )
        else:
            gx = gxhat * inv[None, :, None, None]
        return gx, ggamma, gbeta

    return Tensor._result(out.astype(x.dtype), (x, gamma, beta), bw, "batchnorm2d")


def dropout(x: Tensor, p: float, mode: str = TRAIN, rng=None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) so EVAL is the identity."""
    if not 0.0 <= p < 1.0:
        raise ArgumentError(f"dropout probability must be in [0, 1), got {p}")
    if mode == EVAL or p == 0.0:
        return x
    if rng is None:
        raise ArgumentError("dropout in TRAIN mode needs an rng stream")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return Tensor._result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------------------
# losses

PROB_CLAMP = 1e-7
LOGIT_CLAMP = float(np.log((1 - PROB_CLAMP) / PROB_CLAMP))


def binary_cross_entropy(prob: Tensor, target) -> Tensor:
    """Mean BCE of probabilities (N×1) against 0/1 targets.

    Probabilities are clamped to [1e-7, 1-1e-7]; the gradient is evaluated at
    the clamped value and passed straight through, so saturated wrong
    predictions still receive a learning signal. When `prob` is the output of
    sigmoid(), the loss is computed from the logit and the gradient
    (sigmoid(z) - t)/N goes straight to the logit, which stays exact where a
    float32 sigmoid has already rounded to 0 or 1.
    """
    t = np.asarray(target, dtype=prob.dtype).reshape(-1)
    if prob.ndim != 2 or prob.shape[1] != 1 or prob.shape[0] != t.shape[0]:
        raise ShapeError(f"binary_cross_entropy: prob {prob.shape} vs {t.shape[0]} targets")
    t = t[:, None]
    n = t.shape[0]
    if prob._op == "sigmoid" and prob._parents:
        logit = prob._parents[0]
        z = logit.data.astype(np.float64)
        zc = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
        loss = np.mean(t * np.logaddexp(0, -zc) + (1 - t) * np.logaddexp(0, zc))
        s = prob.data

        def bw_logit(g):
            return (g * (s - t) / n,)

        return Tensor._result(np.asarray(loss, dtype=prob.dtype), (logit,), bw_logit, "bce_logit")

    p = np.clip(prob.data, PROB_CLAMP, 1 - PROB_CLAMP)
    loss = -np.mean(t * np.log(p) + (1 - t) * np.log(1 - p))

    def bw(g):
        return (g * (p - t) / (p * (1 - p)) / n,)

    return Tensor._result(np.asarray(loss, dtype=prob.dtype), (prob,), bw, "bce")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Mean softmax cross-entropy of N×K logits against integer class targets."""
    t = np.asarray(target, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != t.shape[0]:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs {t.shape[0]} targets")
    n = t.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), t].mean()

    def bw(g):
        d = np.exp(logp)
        d[np.arange(n), t] -= 1
        return (g * d / n,)

    return Tensor._result(np.asarray(loss, dtype=logits.dtype), (logits,), bw, "cross_entropy")
