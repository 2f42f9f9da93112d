"""Numba-compiled kernels mirroring ``_kernels_numpy`` exactly.

Import fails cleanly when numba is unavailable; the backend module falls back
to the numpy implementations. fastmath stays off so both backends produce
bit-identical results.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def im2col(xp, kh, kw, stride, oh, ow):
    n, c, hp, wp = xp.shape
    cols = np.empty((n, c * kh * kw, oh * ow), dtype=xp.dtype)
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(oh):
                        base = oy * ow
                        sy = oy * stride + i
                        for ox in range(ow):
                            cols[b, row, base + ox] = xp[b, ch, sy, ox * stride + j]
    return cols


@njit(cache=True)
def col2im(cols, c, hp, wp, kh, kw, stride, oh, ow):
    n = cols.shape[0]
    xp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(oh):
                        base = oy * ow
                        sy = oy * stride + i
                        for ox in range(ow):
                            xp[b, ch, sy, ox * stride + j] += cols[b, row, base + ox]
    return xp


@njit(cache=True)
def maxpool_fwd(x, window, stride):
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    y = np.empty((n, c, oh, ow), dtype=x.dtype)
    idx = np.empty((n, c, oh, ow), dtype=np.int64)
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    best = -np.inf
                    besti = 0
                    for i in range(window):
                        sy = oy * stride + i
                        for j in range(window):
                            sx = ox * stride + j
                            v = x[b, ch, sy, sx]
                            if v > best:  # strict: ties keep the lowest flat index
                                best = v
                                besti = sy * w + sx
                    y[b, ch, oy, ox] = best
                    idx[b, ch, oy, ox] = besti
    return y, idx


@njit(cache=True)
def maxpool_bwd(dy, idx, h, w):
    n, c, oh, ow = dy.shape
    dx = np.zeros((n, c, h * w), dtype=dy.dtype)
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    dx[b, ch, idx[b, ch, oy, ox]] += dy[b, ch, oy, ox]
    return dx.reshape(n, c, h, w)


@njit(cache=True)
def avgpool_fwd(x, window, stride):
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    y = np.zeros((n, c, oh, ow), dtype=x.dtype)
    inv = 1.0 / (window * window)
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    s = 0.0
                    for i in range(window):
                        sy = oy * stride + i
                        for j in range(window):
                            s += x[b, ch, sy, ox * stride + j]
                    y[b, ch, oy, ox] = s * inv
    return y


@njit(cache=True)
def avgpool_bwd(dy, window, stride, h, w):
    n, c, oh, ow = dy.shape
    dx = np.zeros((n, c, h, w), dtype=dy.dtype)
    inv = 1.0 / (window * window)
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    g = dy[b, ch, oy, ox] * inv
                    for i in range(window):
                        sy = oy * stride + i
                        for j in range(window):
                            dx[b, ch, sy, ox * stride + j] += g
    return dx
