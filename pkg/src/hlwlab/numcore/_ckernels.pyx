# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled segment/scatter kernels for the message-passing hot loops.

Signature-compatible with the numpy fallback in ``_pykernels``; for both,
segments are contiguous CSR runs over edge arrays sorted by destination.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

BACKEND = "cython"


def seg_softmax_fwd(double[::1] x, long long[::1] seg_ptr):
    cdef Py_ssize_t n_seg = seg_ptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.empty(x.shape[0])
    cdef double[::1] out = out_arr
    cdef Py_ssize_t s, e, lo, hi
    cdef double mx, tot
    for s in range(n_seg):
        lo = seg_ptr[s]; hi = seg_ptr[s + 1]
        mx = x[lo]
        for e in range(lo + 1, hi):
            if x[e] > mx:
                mx = x[e]
        tot = 0.0
        for e in range(lo, hi):
            out[e] = exp(x[e] - mx)
            tot += out[e]
        for e in range(lo, hi):
            out[e] /= tot
    return out_arr


def seg_softmax_bwd(double[::1] y, double[::1] dy, long long[::1] seg_ptr):
    cdef Py_ssize_t n_seg = seg_ptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dx_arr = np.empty(y.shape[0])
    cdef double[::1] dx = dx_arr
    cdef Py_ssize_t s, e, lo, hi
    cdef double inner
    for s in range(n_seg):
        lo = seg_ptr[s]; hi = seg_ptr[s + 1]
        inner = 0.0
        for e in range(lo, hi):
            inner += y[e] * dy[e]
        for e in range(lo, hi):
            dx[e] = y[e] * (dy[e] - inner)
    return dx_arr


def edge_aggregate_fwd(double[::1] alpha, double[:, ::1] z,
                       long long[::1] src, long long[::1] seg_ptr):
    cdef Py_ssize_t n_seg = seg_ptr.shape[0] - 1
    cdef Py_ssize_t f = z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.zeros((n_seg, f))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t s, e, k, j
    cdef double a
    for s in range(n_seg):
        for e in range(seg_ptr[s], seg_ptr[s + 1]):
            a = alpha[e]
            j = src[e]
            for k in range(f):
                out[s, k] += a * z[j, k]
    return out_arr


def edge_aggregate_bwd(double[::1] alpha, double[:, ::1] z,
                       long long[::1] src, long long[::1] seg_ptr,
                       double[:, ::1] dout):
    cdef Py_ssize_t n_seg = seg_ptr.shape[0] - 1
    cdef Py_ssize_t f = z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dalpha_arr = np.zeros(alpha.shape[0])
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dz_arr = np.zeros((z.shape[0], f))
    cdef double[::1] dalpha = dalpha_arr
    cdef double[:, ::1] dz = dz_arr
    cdef Py_ssize_t s, e, k, j
    cdef double a, acc
    for s in range(n_seg):
        for e in range(seg_ptr[s], seg_ptr[s + 1]):
            j = src[e]
            a = alpha[e]
            acc = 0.0
            for k in range(f):
                acc += dout[s, k] * z[j, k]
                dz[j, k] += a * dout[s, k]
            dalpha[e] = acc
    return dalpha_arr, dz_arr


def seg_sum(double[::1] x, long long[::1] seg_ptr):
    cdef Py_ssize_t n_seg = seg_ptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.zeros(n_seg)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t s, e
    for s in range(n_seg):
        for e in range(seg_ptr[s], seg_ptr[s + 1]):
            out[s] += x[e]
    return out_arr


def scatter_add_vec(double[::1] out, long long[::1] idx, double[::1] v):
    cdef Py_ssize_t e
    for e in range(idx.shape[0]):
        out[idx[e]] += v[e]
    return np.asarray(out)
