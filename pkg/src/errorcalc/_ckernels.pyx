# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; same signatures and results as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, fabs

cnp.import_array()


def block_counts(const unsigned char[::1] bits, int k):
    cdef Py_ssize_t n = bits.shape[0], i
    cdef unsigned long long code = 0, mask = (1ULL << k) - 1
    counts_arr = np.zeros(1 << k, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    for i in range(n):
        code = ((code << 1) | bits[i]) & mask
        if i >= k - 1:
            counts[code] += 1
    return counts_arr


def fsm_select(const unsigned char[::1] bits, const long long[:, ::1] trans,
               const unsigned char[::1] decide, long long initial):
    cdef Py_ssize_t n = bits.shape[0], i
    cdef long long state = initial
    mask_arr = np.zeros(n, dtype=np.bool_)
    cdef cnp.npy_bool[::1] mask = mask_arr
    for i in range(n):
        mask[i] = decide[state]
        state = trans[state, bits[i]]
    return mask_arr


def fsm_bet(const unsigned char[::1] bits, const long long[:, ::1] trans,
            const double[::1] stake, const unsigned char[::1] predict,
            long long initial, double capital):
    cdef Py_ssize_t n = bits.shape[0], i
    cdef long long state = initial
    cdef double c = capital, s
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        s = stake[state] * c
        if predict[state] == bits[i]:
            c = c + s
        else:
            c = c - s
        out[i] = c
        state = trans[state, bits[i]]
    return out_arr


def fsm_bet_batch(const unsigned char[:, ::1] bits, const long long[:, ::1] trans,
                  const double[::1] stake, const unsigned char[::1] predict,
                  long long initial, double capital):
    cdef Py_ssize_t m = bits.shape[0], L = bits.shape[1], r, i
    cdef long long state
    cdef double c, s
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    for r in range(m):
        state = initial
        c = capital
        for i in range(L):
            s = stake[state] * c
            if predict[state] == bits[r, i]:
                c = c + s
            else:
                c = c - s
            state = trans[state, bits[r, i]]
        out[r] = c
    return out_arr


def lil_max(const unsigned char[::1] bits, Py_ssize_t n0):
    # ln ln m increases with m, so ln ln at the last checkpoint (reset each
    # time m doubles) bounds the denominator from below.  The exact value is
    # only computed when that bound could beat the running maximum.
    cdef Py_ssize_t n = bits.shape[0], i
    cdef long long ones = 0
    cdef double best = 0.0, best_sq = 0.0, val, m, d, floor_ll = 0.0, next_check = 0.0
    for i in range(n):
        ones += bits[i]
        if i + 1 < n0:
            continue
        m = <double>(i + 1)
        if m >= next_check:
            floor_ll = log(log(m))
            next_check = 2.0 * m
        d = 2.0 * ones - m
        if d * d < best_sq * (2.0 * m * floor_ll) * (1.0 - 1e-12):
            continue
        val = fabs(d) / sqrt(2.0 * m * log(log(m)))
        if val > best:
            best = val
            best_sq = val * val
    return best
