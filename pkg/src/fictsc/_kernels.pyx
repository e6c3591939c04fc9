# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled gather/scatter loops for conv1d, max-pool and the 1-D W1 merge."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def im2col1d(double[:, :, ::1] xpad, Py_ssize_t K, Py_ssize_t T):
    cdef Py_ssize_t B = xpad.shape[0], C = xpad.shape[1]
    cdef Py_ssize_t b, t, c, k, base
    out_arr = np.empty((B, T, C * K), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for b in range(B):
        for t in range(T):
            for c in range(C):
                base = c * K
                for k in range(K):
                    out[b, t, base + k] = xpad[b, c, t + k]
    return out_arr


def col2im1d(double[:, :, ::1] dcols, Py_ssize_t C, Py_ssize_t K, Py_ssize_t Tp):
    cdef Py_ssize_t B = dcols.shape[0], T = dcols.shape[1]
    cdef Py_ssize_t b, t, c, k, base
    out_arr = np.zeros((B, C, Tp), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for b in range(B):
        for t in range(T):
            for c in range(C):
                base = c * K
                for k in range(K):
                    out[b, c, t + k] += dcols[b, t, base + k]
    return out_arr


def maxpool1d_same(double[:, :, ::1] x, Py_ssize_t k):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t left = (k - 1) // 2
    cdef Py_ssize_t b, c, t, j, s, best
    cdef double v, bv
    out_arr = np.empty((B, C, T), dtype=np.float64)
    idx_arr = np.empty((B, C, T), dtype=np.int64)
    cdef double[:, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, ::1] idx = idx_arr
    for b in range(B):
        for c in range(C):
            for t in range(T):
                best = -1
                bv = 0.0
                for j in range(k):
                    s = t - left + j
                    if s < 0 or s >= T:
                        continue
                    v = x[b, c, s]
                    if best < 0 or v > bv:
                        best = s
                        bv = v
                out[b, c, t] = bv
                idx[b, c, t] = best
    return out_arr, idx_arr


def maxpool1d_backward(double[:, :, ::1] dout, cnp.int64_t[:, :, ::1] idx):
    cdef Py_ssize_t B = dout.shape[0], C = dout.shape[1], T = dout.shape[2]
    cdef Py_ssize_t b, c, t
    dx_arr = np.zeros((B, C, T), dtype=np.float64)
    cdef double[:, :, ::1] dx = dx_arr
    for b in range(B):
        for c in range(C):
            for t in range(T):
                dx[b, c, idx[b, c, t]] += dout[b, c, t]
    return dx_arr


def w1_sorted(double[::1] u, double[::1] v):
    # each atom of u carries m mass units, each atom of v carries n units
    cdef Py_ssize_t n = u.shape[0], m = v.shape[0]
    cdef Py_ssize_t i = 0, j = 0
    cdef long long ru = m, rv = n, step
    cdef double total = 0.0
    while i < n and j < m:
        step = ru if ru < rv else rv
        total += step * fabs(u[i] - v[j])
        ru -= step
        rv -= step
        if ru == 0:
            i += 1
            ru = m
        if rv == 0:
            j += 1
            rv = n
    return total / (<double>n * <double>m)
