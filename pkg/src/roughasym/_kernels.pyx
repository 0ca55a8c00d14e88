# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; mirrors the API of ``roughasym._kernels_py``."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def fill_level_pairs(dw, what, base):
    """See _kernels_py.fill_level_pairs."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dw_ = np.ascontiguousarray(dw, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] what_ = np.ascontiguousarray(what, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] base_ = np.ascontiguousarray(base, dtype=np.float64)
    cdef Py_ssize_t levels = base_.shape[0]
    cdef Py_ssize_t n = base_.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] pairs = np.zeros((levels, n + 1, n + 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] binom = np.zeros((levels + 1, levels + 2))
    cdef Py_ssize_t m, l, i, j, q
    for m in range(levels + 1):
        binom[m, 0] = 1.0
        for l in range(1, m + 1):
            binom[m, l] = binom[m - 1, l - 1] + binom[m - 1, l]
    cdef double d, acc, dp
    for j in range(n):
        for i in range(j + 1):
            d = what_[j] - what_[i]
            for m in range(1, levels + 1):
                dp = 1.0
                for q in range(m):
                    dp *= d
                acc = dp * dw_[j]
                for l in range(1, m + 1):
                    dp = 1.0
                    for q in range(m - l):
                        dp *= d
                    acc += binom[m, l] * dp * base_[l - 1, j]
                pairs[m - 1, i, j + 1] = pairs[m - 1, i, j] + acc
    return pairs


def pair_holder_max(pairs, times, exponent):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p_ = np.ascontiguousarray(pairs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t_ = np.ascontiguousarray(times, dtype=np.float64)
    cdef double expo = float(exponent)
    cdef Py_ssize_t n1 = t_.shape[0]
    cdef Py_ssize_t i, j
    cdef double best = 0.0, q, v
    for i in range(n1):
        for j in range(i + 1, n1):
            v = p_[i, j]
            if v < 0:
                v = -v
            q = v / (t_[j] - t_[i]) ** expo
            if q > best:
                best = q
    return best


def path_holder_max(values, times, exponent):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v_ = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t_ = np.ascontiguousarray(times, dtype=np.float64)
    cdef double expo = float(exponent)
    cdef Py_ssize_t n1 = t_.shape[0]
    cdef Py_ssize_t i, j
    cdef double best = 0.0, q, d
    for i in range(n1):
        for j in range(i + 1, n1):
            d = v_[j] - v_[i]
            if d < 0:
                d = -d
            q = d / (t_[j] - t_[i]) ** expo
            if q > best:
                best = q
    return best


def cell_cross_sums(wsamp, wref, hsamp, href, dx, substeps, jmax, pmax):
    """See _kernels_py.cell_cross_sums."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ws = np.ascontiguousarray(wsamp, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wr = np.ascontiguousarray(wref, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] hs = np.ascontiguousarray(hsamp, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] hr = np.ascontiguousarray(href, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dx_ = np.ascontiguousarray(dx, dtype=np.float64)
    cdef Py_ssize_t r = int(substeps)
    cdef Py_ssize_t jm = int(jmax)
    cdef Py_ssize_t pm = int(pmax)
    cdef Py_ssize_t n = wr.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.zeros((jm + 1, pm + 1, n))
    cdef Py_ssize_t i, l, j, p, idx
    cdef double wv, hv, wp, term
    for i in range(n):
        for l in range(r):
            idx = i * r + l
            wv = ws[idx] - wr[i]
            hv = hs[idx] - hr[i]
            wp = dx_[idx]
            for j in range(jm + 1):
                term = wp
                for p in range(pm + 1):
                    out[j, p, i] += term
                    term *= hv
                wp *= wv
    return out
