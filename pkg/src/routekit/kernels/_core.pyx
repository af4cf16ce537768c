# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance kernels used by clustering and neighbor search."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pairwise_sq_dists(double[:, ::1] x, double[:, ::1] y):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = y.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    if y.shape[1] != d:
        raise ValueError("dimension mismatch between point sets")
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, t
    cdef double acc, diff
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(d):
                diff = x[i, t] - y[j, t]
                acc += diff * diff
            out[i, j] = acc
    return out_arr


def nearest_centroid(double[:, ::1] x, double[:, ::1] c):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k = c.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    if c.shape[1] != d:
        raise ValueError("dimension mismatch between points and centroids")
    if k == 0:
        raise ValueError("need at least one centroid")
    idx_arr = np.empty(n, dtype=np.int64)
    best_arr = np.empty(n, dtype=np.float64)
    cdef long long[::1] idx = idx_arr
    cdef double[::1] best = best_arr
    cdef Py_ssize_t i, j, t
    cdef double acc, diff, cur
    cdef Py_ssize_t cur_j
    for i in range(n):
        cur = -1.0
        cur_j = 0
        for j in range(k):
            acc = 0.0
            for t in range(d):
                diff = x[i, t] - c[j, t]
                acc += diff * diff
            # strict < keeps the lowest index on exact ties
            if cur < 0.0 or acc < cur:
                cur = acc
                cur_j = j
        idx[i] = cur_j
        best[i] = cur
    return idx_arr, best_arr
