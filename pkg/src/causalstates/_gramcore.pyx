# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the Gram-matrix inner loops.

Mirrors the `_grampy` numpy backend. The GIL is released inside the row
loops so callers can run several row chunks on Python threads.
"""

from libc.math cimport exp, sqrt

import numpy as np


cdef inline double _entry_real(const double[:, :, ::1] A, const double[:, :, ::1] B,
                               Py_ssize_t i, Py_ssize_t j, const double[::1] w,
                               double inv_xi, int shape_code, int temporal_code) noexcept nogil:
    cdef Py_ssize_t L = A.shape[1]
    cdef Py_ssize_t D = A.shape[2]
    cdef Py_ssize_t t, c
    cdef double acc = 0.0
    cdef double d2, diff, slog
    cdef double half_inv2 = 0.5 * inv_xi * inv_xi
    for t in range(L):
        d2 = 0.0
        for c in range(D):
            diff = A[i, t, c] - B[j, t, c]
            d2 += diff * diff
        if shape_code == 0:
            slog = -half_inv2 * d2
        else:
            slog = -inv_xi * sqrt(d2)
        if temporal_code == 0:
            acc += w[t] * slog
        else:
            acc += w[t] * exp(slog)
    return acc


cdef inline double _entry_symbol(const long long[:, ::1] A, const long long[:, ::1] B,
                                 Py_ssize_t i, Py_ssize_t j, const double[::1] w,
                                 double inv_xi, int shape_code, int temporal_code) noexcept nogil:
    cdef Py_ssize_t L = A.shape[1]
    cdef Py_ssize_t t
    cdef double acc = 0.0
    cdef double d, slog
    cdef double half_inv2 = 0.5 * inv_xi * inv_xi
    for t in range(L):
        d = 0.0 if A[i, t] == B[j, t] else 1.0
        if shape_code == 0:
            slog = -half_inv2 * d
        else:
            slog = -inv_xi * d
        if temporal_code == 0:
            acc += w[t] * slog
        else:
            acc += w[t] * exp(slog)
    return acc


def sym_real(const double[:, :, ::1] X, double[:, ::1] out, const double[::1] w,
             double inv_xi, int shape_code, int temporal_code, Py_ssize_t lo, Py_ssize_t hi):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(lo, hi):
            for j in range(i, n):
                out[i, j] = _entry_real(X, X, i, j, w, inv_xi, shape_code, temporal_code)


def cross_real(const double[:, :, ::1] Xa, const double[:, :, ::1] Xb, double[:, ::1] out,
               const double[::1] w, double inv_xi, int shape_code, int temporal_code):
    cdef Py_ssize_t na = Xa.shape[0]
    cdef Py_ssize_t nb = Xb.shape[0]
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(na):
            for j in range(nb):
                out[i, j] = _entry_real(Xa, Xb, i, j, w, inv_xi, shape_code, temporal_code)


def sym_symbol(const long long[:, ::1] X, double[:, ::1] out, const double[::1] w,
               double inv_xi, int shape_code, int temporal_code, Py_ssize_t lo, Py_ssize_t hi):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(lo, hi):
            for j in range(i, n):
                out[i, j] = _entry_symbol(X, X, i, j, w, inv_xi, shape_code, temporal_code)


def cross_symbol(const long long[:, ::1] Xa, const long long[:, ::1] Xb, double[:, ::1] out,
                 const double[::1] w, double inv_xi, int shape_code, int temporal_code):
    cdef Py_ssize_t na = Xa.shape[0]
    cdef Py_ssize_t nb = Xb.shape[0]
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(na):
            for j in range(nb):
                out[i, j] = _entry_symbol(Xa, Xb, i, j, w, inv_xi, shape_code, temporal_code)
