"""Numpy backend for the Gram-matrix inner loops.

Drop-in replacement for the compiled `_gramcore` extension. Each (i, j)
entry is reduced over sites and components with a fixed order, so values
do not depend on row partitioning. Shape codes: 0 gaussian, 1 laplacian.
Temporal codes: 0 geometric (weighted log sum), 1 arithmetic (weighted sum
of kernel values).
"""

import numpy as np


def _site_log_real(Xi, Xj, inv_xi, shape_code):
    diff = Xi - Xj
    d2 = (diff * diff).sum(axis=-1)
    if shape_code == 0:
        return (-0.5 * inv_xi * inv_xi) * d2
    return -inv_xi * np.sqrt(d2)


def _site_log_symbol(Xi, Xj, inv_xi, shape_code):
    neq = (Xi != Xj).astype(float)
    if shape_code == 0:
        return (-0.5 * inv_xi * inv_xi) * neq
    return -inv_xi * neq


def _aggregate(slog, w, temporal_code):
    if temporal_code == 0:
        return (slog * w).sum(axis=-1)
    return (np.exp(slog) * w).sum(axis=-1)


def sym_real(X, out, w, inv_xi, shape_code, temporal_code, lo, hi):
    for i in range(lo, hi):
        slog = _site_log_real(X[i][None, :, :], X[i:], inv_xi, shape_code)
        out[i, i:] = _aggregate(slog, w, temporal_code)


def cross_real(Xa, Xb, out, w, inv_xi, shape_code, temporal_code):
    for i in range(Xa.shape[0]):
        slog = _site_log_real(Xa[i][None, :, :], Xb, inv_xi, shape_code)
        out[i, :] = _aggregate(slog, w, temporal_code)


def sym_symbol(X, out, w, inv_xi, shape_code, temporal_code, lo, hi):
    for i in range(lo, hi):
        slog = _site_log_symbol(X[i][None, :], X[i:], inv_xi, shape_code)
        out[i, i:] = _aggregate(slog, w, temporal_code)


def cross_symbol(Xa, Xb, out, w, inv_xi, shape_code, temporal_code):
    for i in range(Xa.shape[0]):
        slog = _site_log_symbol(Xa[i][None, :], Xb, inv_xi, shape_code)
        out[i, :] = _aggregate(slog, w, temporal_code)
