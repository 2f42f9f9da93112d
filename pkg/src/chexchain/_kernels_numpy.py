"""Pure-numpy kernels for the convolution and pooling hot paths.

im2col / col2im loop only over the kernel window (kh*kw slice copies), so the
heavy lifting stays inside vectorized numpy. The matching numba backend in
``_kernels_numba`` implements the same six functions with explicit loops.
"""

import numpy as np


def im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """(N,C,Hp,Wp) padded input -> (N, C*kh*kw, oh*ow) patch matrix."""
    n, c, _, _ = xp.shape
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j, :, :] = xp[
                :, :, i : i + stride * oh : stride, j : j + stride * ow : stride
            ]
    return cols.reshape(n, c * kh * kw, oh * ow)


def col2im(
    cols: np.ndarray, c: int, hp: int, wp: int, kh: int, kw: int, stride: int, oh: int, ow: int
) -> np.ndarray:
    """Scatter-add inverse of im2col; returns (N,C,Hp,Wp)."""
    n = cols.shape[0]
    cols6 = cols.reshape(n, c, kh, kw, oh, ow)
    xp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols6[
                :, :, i, j, :, :
            ]
    return xp


def maxpool_fwd(x: np.ndarray, window: int, stride: int):
    """Returns pooled (N,C,oh,ow) and int64 argmax flat indices into H*W.

    Ties break toward the lowest flat input index (row-major window scan).
    """
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    patches = np.empty((n, c, window, window, oh, ow), dtype=x.dtype)
    for i in range(window):
        for j in range(window):
            patches[:, :, i, j, :, :] = x[
                :, :, i : i + stride * oh : stride, j : j + stride * ow : stride
            ]
    flat = patches.reshape(n, c, window * window, oh, ow)
    local = flat.argmax(axis=2)  # first occurrence = lowest (i,j) = lowest flat index
    y = np.take_along_axis(flat, local[:, :, None, :, :], axis=2)[:, :, 0, :, :]
    ih = local // window
    iw = local % window
    rows = ih + stride * np.arange(oh)[None, None, :, None]
    cols_ = iw + stride * np.arange(ow)[None, None, None, :]
    idx = (rows * w + cols_).astype(np.int64)
    return y, idx


def maxpool_bwd(dy: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    n, c, oh, ow = dy.shape
    dx = np.zeros((n, c, h * w), dtype=dy.dtype)
    flat_idx = idx.reshape(n, c, oh * ow)
    np.add.at(dx, (np.arange(n)[:, None, None], np.arange(c)[None, :, None], flat_idx), dy.reshape(n, c, oh * ow))
    return dx.reshape(n, c, h, w)


def avgpool_fwd(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    y = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for i in range(window):
        for j in range(window):
            y += x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return y / (window * window)


def avgpool_bwd(dy: np.ndarray, window: int, stride: int, h: int, w: int) -> np.ndarray:
    n, c, oh, ow = dy.shape
    dx = np.zeros((n, c, h, w), dtype=dy.dtype)
    g = dy / (window * window)
    for i in range(window):
        for j in range(window):
            dx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += g
    return dx
