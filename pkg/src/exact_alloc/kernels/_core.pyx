# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core.

Mirrors ``_ref.py`` exactly: same dtypes, same results, and for the
floating-point kernels the same accumulation order, so switching backends
never changes a single output bit.  The test suite asserts bit equality.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def effective_context(segment_starts, length):
    cdef cnp.int64_t[::1] starts = np.ascontiguousarray(segment_starts, dtype=np.int64)
    cdef Py_ssize_t n = length
    out_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t k, i, s, e
    cdef Py_ssize_t n_seg = starts.shape[0]
    for k in range(n_seg):
        s = starts[k]
        e = starts[k + 1] if k + 1 < n_seg else n
        for i in range(s, e):
            out[i] = i - s
    return out_arr


cdef inline cnp.int64_t _bucket_of(cnp.int64_t v) nogil:
    cdef cnp.int64_t bits = 0
    if v <= 7:
        return 0
    while v > 0:
        v >>= 1
        bits += 1
    return bits - 3


def bucket_indices(values):
    cdef cnp.int64_t[::1] v = np.ascontiguousarray(values, dtype=np.int64)
    cdef Py_ssize_t n = v.shape[0]
    out_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = _bucket_of(v[i])
    return out_arr


def bucket_counts(values, mask, n_buckets):
    cdef cnp.int64_t[::1] v = np.ascontiguousarray(values, dtype=np.int64)
    cdef cnp.uint8_t[::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    out_arr = np.zeros(n_buckets, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t i
    cdef cnp.int64_t b
    cdef cnp.int64_t nb = n_buckets
    for i in range(v.shape[0]):
        if m[i]:
            b = _bucket_of(v[i])
            if b >= nb:
                raise ValueError(
                    f"bucket index {b} out of range for {n_buckets} buckets"
                )
            out[b] += 1
    return out_arr


def map_bucket_weights(values, mask, bucket_weights):
    cdef cnp.int64_t[::1] v = np.ascontiguousarray(values, dtype=np.int64)
    cdef cnp.uint8_t[::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef cnp.float64_t[::1] table = np.ascontiguousarray(bucket_weights, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t tsize = table.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] out = out_arr
    cdef Py_ssize_t i
    cdef cnp.int64_t b
    for i in range(n):
        if m[i]:
            b = _bucket_of(v[i])
            if b >= tsize:
                raise ValueError(
                    f"bucket index {b} out of range for weight table of size {tsize}"
                )
            out[i] = table[b]
        else:
            out[i] = 1.0
    return out_arr


def segment_prefix_mean(vectors, segment_starts, length=None):
    vec_arr = np.ascontiguousarray(vectors, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] vec = vec_arr
    cdef Py_ssize_t n = vec.shape[0] if length is None else length
    cdef Py_ssize_t d = vec.shape[1]
    cdef cnp.int64_t[::1] starts = np.ascontiguousarray(segment_starts, dtype=np.int64)
    out_arr = np.zeros((n, d), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    acc_arr = np.zeros(d, dtype=np.float64)
    cdef cnp.float64_t[::1] acc = acc_arr
    cdef Py_ssize_t n_seg = starts.shape[0]
    cdef Py_ssize_t k, i, j, s, e
    cdef cnp.float64_t denom
    for k in range(n_seg):
        s = starts[k]
        e = starts[k + 1] if k + 1 < n_seg else n
        if e - s < 2:
            continue
        for j in range(d):
            acc[j] = 0.0
        for i in range(s, e - 1):
            denom = <cnp.float64_t> (i + 1 - s)
            for j in range(d):
                acc[j] = acc[j] + vec[i, j]
                out[i + 1, j] = acc[j] / denom
    return out_arr


def segment_suffix_scatter(grads, denominators, segment_starts):
    g_arr = np.ascontiguousarray(grads, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] g = g_arr
    cdef cnp.float64_t[::1] den = np.ascontiguousarray(denominators, dtype=np.float64)
    cdef cnp.int64_t[::1] starts = np.ascontiguousarray(segment_starts, dtype=np.int64)
    cdef Py_ssize_t n = g.shape[0]
    cdef Py_ssize_t d = g.shape[1]
    out_arr = np.zeros((n, d), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    acc_arr = np.zeros(d, dtype=np.float64)
    cdef cnp.float64_t[::1] acc = acc_arr
    cdef Py_ssize_t n_seg = starts.shape[0]
    cdef Py_ssize_t k, i, j, s, e
    cdef cnp.float64_t dv
    for k in range(n_seg):
        s = starts[k]
        e = starts[k + 1] if k + 1 < n_seg else n
        if e - s < 2:
            continue
        for j in range(d):
            acc[j] = 0.0
        for i in range(e - 2, s - 1, -1):
            dv = den[i + 1]
            if dv != 0.0:
                for j in range(d):
                    acc[j] = acc[j] + g[i + 1, j] / dv
            for j in range(d):
                out[i, j] = acc[j]
    return out_arr
