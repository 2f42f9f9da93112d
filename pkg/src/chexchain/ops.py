"""Differentiable operations over autodiff Tensors.

Every op validates shapes eagerly (ConfigurationError), computes with numpy
or the active kernel backend, and records a backward rule on the active
Graph. Binary elementwise ops allow no implicit broadcasting except
scalar-with-tensor.
"""

import numpy as np

from . import backend
from .autodiff import Tensor, record
from .errors import ConfigurationError, NumericDomainError, UsageError


def _scalar_or_same(a: Tensor, b: Tensor, op: str):
    if a.data.shape == b.data.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise ConfigurationError(
        f"{op}: shapes {a.data.shape} and {b.data.shape} differ and neither is scalar"
    )


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the scalar operand's shape."""
    if g.shape == tuple(shape):
        return g
    return np.sum(g).reshape(shape) * np.ones(shape) if np.prod(shape) == 1 else g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _scalar_or_same(a, b, "add")
    out = a.data + b.data

    def bw(dy):
        return _reduce_to(dy, a.data.shape), _reduce_to(dy, b.data.shape)

    return record("add", (a, b), out, bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _scalar_or_same(a, b, "sub")
    out = a.data - b.data

    def bw(dy):
        return _reduce_to(dy, a.data.shape), _reduce_to(-dy, b.data.shape)

    return record("sub", (a, b), out, bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _scalar_or_same(a, b, "mul")
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bw(dy):
        return _reduce_to(dy * bd, ad.shape), _reduce_to(dy * ad, bd.shape)

    return record("mul", (a, b), out, bw)


def neg(a: Tensor) -> Tensor:
    def bw(dy):
        return (-dy,)

    return record("neg", (a,), -a.data, bw)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(dy):
        return (dy * out * (1.0 - out),)

    return record("sigmoid", (a,), out, bw)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(dy):
        return (dy * (1.0 - out * out),)

    return record("tanh", (a,), out, bw)


def relu(a: Tensor) -> Tensor:
    x = a.data
    out = np.maximum(x, 0.0)
    mask = x > 0

    def bw(dy):
        return (dy * mask,)

    return record("relu", (a,), out, bw, meta={"kink_preact": x})


def log(a: Tensor) -> Tensor:
    x = a.data
    if np.any(x <= 0):
        idx = tuple(int(v) for v in np.argwhere(x <= 0)[0])
        raise NumericDomainError(f"log of non-positive value at index {idx}", index=idx)

    out = np.log(x)

    def bw(dy):
        return (dy / x,)

    return record("log", (a,), out, bw, meta={"kink_preact": x})


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only where unclipped."""
    x = a.data
    out = np.clip(x, lo, hi)
    mask = (x >= lo) & (x <= hi)

    def bw(dy):
        return (dy * mask,)

    return record("clip", (a,), out, bw, meta={"kink_clip": (x, lo, hi)})


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ConfigurationError(
            f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}"
        )
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def bw(dy):
        ga = dy @ bd.T if a.requires_grad else None
        gb = ad.T @ dy if b.requires_grad else None
        return ga, gb

    return record("matmul", (a, b), out, bw)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """out = xW + b with b broadcast over rows."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ConfigurationError(
            f"affine: incompatible shapes {x.data.shape} x {w.data.shape}"
        )
    if b.data.shape != (w.data.shape[1],):
        raise ConfigurationError(
            f"affine: bias shape {b.data.shape} != ({w.data.shape[1]},)"
        )
    out = x.data @ w.data + b.data[None, :]
    xd, wd = x.data, w.data

    def bw(dy):
        gx = dy @ wd.T if x.requires_grad else None
        gw = xd.T @ dy if w.requires_grad else None
        gb = dy.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return record("affine", (x, w, b), out, bw)


# ---------------------------------------------------------------------------
# convolution and pooling


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    if x.data.ndim != 4 or kernels.data.ndim != 4:
        raise ConfigurationError("conv2d: input and kernels must be 4-D")
    n, c, h, w = x.data.shape
    f, ck, kh, kw = kernels.data.shape
    if ck != c:
        raise ConfigurationError(f"conv2d: input has {c} channels, kernels expect {ck}")
    if bias.data.shape != (f,):
        raise ConfigurationError(f"conv2d: bias shape {bias.data.shape} != ({f},)")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ConfigurationError("conv2d: kernel larger than padded input")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = backend.kernels.im2col(xp, kh, kw, stride, oh, ow)  # (N, C*kh*kw, oh*ow)
    w2 = kernels.data.reshape(f, c * kh * kw)
    out = (np.matmul(w2[None, :, :], cols) + bias.data[None, :, None]).reshape(n, f, oh, ow)

    hp, wp = xp.shape[2], xp.shape[3]

    def bw(dy):
        dyf = dy.reshape(n, f, oh * ow)
        gw = gb = gx = None
        if kernels.requires_grad:
            gw = np.matmul(dyf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(f, c, kh, kw)
        if bias.requires_grad:
            gb = dyf.sum(axis=(0, 2))
        if x.requires_grad:
            dcols = np.matmul(w2.T[None, :, :], dyf)
            gxp = backend.kernels.col2im(dcols, c, hp, wp, kh, kw, stride, oh, ow)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        return gx, gw, gb

    return record("conv2d", (x, kernels, bias), out, bw)


def pool2d(x: Tensor, kind: str, window: int, stride: int) -> Tensor:
    if x.data.ndim != 4:
        raise ConfigurationError("pool2d: input must be 4-D")
    n, c, h, w = x.data.shape
    if window > h or window > w:
        raise ConfigurationError(f"pool2d: window {window} exceeds spatial dims {h}x{w}")
    if kind == "max":
        out, idx = backend.kernels.maxpool_fwd(x.data, window, stride)

        def bw(dy):
            return (backend.kernels.maxpool_bwd(dy, idx, h, w),)

        return record("pool2d_max", (x,), out, bw, meta={"kink_maxpool": (x.data, window, stride)})
    if kind == "avg":
        out = backend.kernels.avgpool_fwd(x.data, window, stride)

        def bw(dy):
            return (backend.kernels.avgpool_bwd(dy, window, stride, h, w),)

        return record("pool2d_avg", (x,), out, bw)
    raise ConfigurationError(f"pool2d: unknown kind {kind!r}")


def pad2d(x: Tensor, padding: int) -> Tensor:
    """Zero padding on both spatial dims (used by the 3x3 stem max pool)."""
    if padding == 0:
        return x
    out = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    h, w = x.data.shape[2], x.data.shape[3]

    def bw(dy):
        return (dy[:, :, padding : padding + h, padding : padding + w],)

    return record("pad2d", (x,), out, bw)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise ConfigurationError("global_avg_pool: input must be 4-D")
    n, c, h, w = x.data.shape
    out = x.data.mean(axis=(2, 3))

    def bw(dy):
        return (np.broadcast_to(dy[:, :, None, None] / (h * w), (n, c, h, w)).copy(),)

    return record("global_avg_pool", (x,), out, bw)


# ---------------------------------------------------------------------------
# shape plumbing


def concat_channels(*tensors: Tensor) -> Tensor:
    """Concatenate along axis 1 (channels for 4-D, columns for 2-D)."""
    if len(tensors) < 1:
        raise ConfigurationError("concat_channels: needs at least one tensor")
    nd = tensors[0].data.ndim
    lead = tensors[0].data.shape[:1]
    tail = tensors[0].data.shape[2:]
    for t in tensors:
        if t.data.ndim != nd or t.data.shape[:1] != lead or t.data.shape[2:] != tail:
            raise ConfigurationError(
                "concat_channels: batch/spatial dims disagree: "
                + ", ".join(str(t.data.shape) for t in tensors)
            )
    out = np.concatenate([t.data for t in tensors], axis=1)
    sizes = [t.data.shape[1] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(dy):
        return tuple(
            dy[:, offsets[i] : offsets[i + 1]] if t.requires_grad else None
            for i, t in enumerate(tensors)
        )

    return record("concat_channels", tensors, out, bw)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start <= stop <= x.data.shape[1]):
        raise ConfigurationError(
            f"slice_channels: [{start}:{stop}] out of range for {x.data.shape[1]} channels"
        )
    out = x.data[:, start:stop].copy()

    def bw(dy):
        g = np.zeros_like(x.data)
        g[:, start:stop] = dy
        return (g,)

    return record("slice_channels", (x,), out, bw)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.data.size:
        raise ConfigurationError(f"reshape: {x.data.shape} -> {shape} changes element count")
    out = x.data.reshape(shape)
    orig = x.data.shape

    def bw(dy):
        return (dy.reshape(orig),)

    return record("reshape", (x,), out, bw)


def sum_all(x: Tensor) -> Tensor:
    out = np.array(x.data.sum())

    def bw(dy):
        return (np.broadcast_to(dy, x.data.shape).copy(),)

    return record("sum", (x,), out, bw)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = np.array(x.data.mean())

    def bw(dy):
        return (np.broadcast_to(dy / n, x.data.shape).copy(),)

    return record("mean", (x,), out, bw)


# ---------------------------------------------------------------------------
# batch normalization


class BNState:
    """Running statistics for one batch_norm site.

    build_* constructors allocate the buffers (mean 0, var 1) so freshly
    built models evaluate immediately; a raw BNState() is uninitialized and
    eval-mode use raises StateError until a train-mode pass runs.
    """

    __slots__ = ("running_mean", "running_var", "initialized")

    def __init__(self, channels: int = None):
        if channels is None:
            self.running_mean = None
            self.running_var = None
            self.initialized = False
        else:
            self.running_mean = np.zeros(channels, dtype=np.float64)
            self.running_var = np.ones(channels, dtype=np.float64)
            self.initialized = True


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BNState,
    mode: str,
    eps: float = 1e-5,
    momentum: float = 0.1,
) -> Tensor:
    """Channel-wise batch normalization for (N,C,H,W) input.

    Train mode normalizes by biased batch statistics and folds them into the
    running state; eval mode normalizes by the running state.
    """
    from .errors import StateError

    if x.data.ndim != 4:
        raise ConfigurationError("batch_norm: input must be 4-D")
    n, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ConfigurationError("batch_norm: gamma/beta must have shape (C,)")
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"batch_norm: unknown mode {mode!r}")

    if mode == "train":
        m = n * h * w
        if m < 2:
            raise ConfigurationError("batch_norm: train mode needs N*H*W >= 2")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        if state.running_mean is None:
            state.running_mean = np.zeros(c, dtype=np.float64)
            state.running_var = np.ones(c, dtype=np.float64)
        state.running_mean = (1 - momentum) * state.running_mean + momentum * mean
        state.running_var = (1 - momentum) * state.running_var + momentum * var
        state.initialized = True

        invstd = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mean[None, :, None, None]) * invstd[None, :, None, None]
        out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
        gd = gamma.data

        def bw(dy):
            ggamma = (dy * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
            gbeta = dy.sum(axis=(0, 2, 3)) if beta.requires_grad else None
            gx = None
            if x.requires_grad:
                dxhat = dy * gd[None, :, None, None]
                s1 = dxhat.sum(axis=(0, 2, 3))
                s2 = (dxhat * xhat).sum(axis=(0, 2, 3))
                gx = (
                    invstd[None, :, None, None]
                    / m
                    * (m * dxhat - s1[None, :, None, None] - xhat * s2[None, :, None, None])
                )
            return gx, ggamma, gbeta

        return record("batch_norm", (x, gamma, beta), out, bw)

    if not state.initialized:
        raise StateError("batch_norm: eval mode with uninitialized running state")
    invstd = 1.0 / np.sqrt(state.running_var + eps)
    xhat = (x.data - state.running_mean[None, :, None, None]) * invstd[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    gd = gamma.data

    def bw(dy):
        ggamma = (dy * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = dy.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = dy * (gd * invstd)[None, :, None, None] if x.requires_grad else None
        return gx, ggamma, gbeta

    return record("batch_norm", (x, gamma, beta), out, bw)
