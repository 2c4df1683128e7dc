"""Numpy reference implementation of the segment/scatter kernels.

Same call signatures as the compiled twin in ``_ckernels``; the backend
module picks one at import time. Segments are contiguous runs described by
CSR-style offsets ``seg_ptr`` (length n_segments + 1) over arrays that are
sorted by destination; callers guarantee every segment is nonempty.
"""

import numpy as np

BACKEND = "numpy"


def seg_softmax_fwd(x, seg_ptr):
    """Softmax within each contiguous segment, max-shifted for stability."""
    starts = seg_ptr[:-1]
    seg_of = np.repeat(np.arange(len(starts)), np.diff(seg_ptr))
    mx = np.maximum.reduceat(x, starts)
    y = np.exp(x - mx[seg_of])
    tot = np.add.reduceat(y, starts)
    return y / tot[seg_of]


def seg_softmax_bwd(y, dy, seg_ptr):
    """dx = y * (dy - sum_seg(y * dy))."""
    starts = seg_ptr[:-1]
    seg_of = np.repeat(np.arange(len(starts)), np.diff(seg_ptr))
    inner = np.add.reduceat(y * dy, starts)
    return y * (dy - inner[seg_of])


def edge_aggregate_fwd(alpha, z, src, seg_ptr):
    """out[s] = sum over edges e in segment s of alpha[e] * z[src[e]]."""
    return np.add.reduceat(alpha[:, None] * z[src], seg_ptr[:-1], axis=0)


def edge_aggregate_bwd(alpha, z, src, seg_ptr, dout):
    """Gradients of edge_aggregate_fwd w.r.t. alpha and z."""
    starts = seg_ptr[:-1]
    seg_of = np.repeat(np.arange(len(starts)), np.diff(seg_ptr))
    dseg = dout[seg_of]                                # (E, F)
    dalpha = np.einsum("ef,ef->e", dseg, z[src])
    dz = np.zeros_like(z)
    np.add.at(dz, src, alpha[:, None] * dseg)
    return dalpha, dz


def seg_sum(x, seg_ptr):
    return np.add.reduceat(x, seg_ptr[:-1])


def scatter_add_vec(out, idx, v):
    np.add.at(out, idx, v)
    return out
