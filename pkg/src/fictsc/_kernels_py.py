"""Pure numpy versions of the compiled kernels, same signatures and results."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col1d(xpad, K, T):
    B, C, _ = xpad.shape
    win = sliding_window_view(xpad, K, axis=2)[:, :, :T, :]  # (B, C, T, K)
    return np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B, T, C * K)


def col2im1d(dcols, C, K, Tp):
    B, T, _ = dcols.shape
    d = dcols.reshape(B, T, C, K)
    out = np.zeros((B, C, Tp))
    for k in range(K):
        out[:, :, k:k + T] += d[:, :, :, k].transpose(0, 2, 1)
    return out


def maxpool1d_same(x, k):
    B, C, T = x.shape
    left = (k - 1) // 2
    xp = np.full((B, C, T + k - 1), -np.inf)
    xp[:, :, left:left + T] = x
    win = sliding_window_view(xp, k, axis=2)[:, :, :T, :]
    arg = np.argmax(win, axis=3)  # first maximum, matching the compiled loop
    idx = (np.arange(T)[None, None, :] - left + arg).astype(np.int64)
    out = np.take_along_axis(x, idx, axis=2)
    return out, idx


def maxpool1d_backward(dout, idx):
    B, C, T = dout.shape
    dx = np.zeros((B, C, T))
    flat = (np.arange(B * C)[:, None] * T + idx.reshape(B * C, T)).ravel()
    np.add.at(dx.reshape(-1), flat, dout.ravel())
    return dx


def w1_sorted(u, v):
    n, m = len(u), len(v)
    # breakpoints of both quantile functions on the integer mass grid [0, n*m]
    cuts = np.union1d(np.arange(n + 1, dtype=np.int64) * m, np.arange(m + 1, dtype=np.int64) * n)
    left, widths = cuts[:-1], np.diff(cuts)
    diffs = np.abs(u[left // m] - v[left // n])
    return float(np.dot(widths, diffs) / (n * m))
