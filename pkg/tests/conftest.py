"""Shared fixtures and independent oracle implementations.

The oracles here deliberately re-derive everything with plain loops and
dense solves so they share no code path with the package internals.
"""

import math

import numpy as np
import pytest

from causalstates.series import Block, LibraryConfig, MultiSeries, SourceMeta, build_library


def make_series(arrays, valid=None, names=None):
    """Single-block series from a list of (L,) or (L, dim) arrays."""
    values = []
    for a in arrays:
        a = np.asarray(a, dtype=float)
        values.append(a[:, None] if a.ndim == 1 else a)
    L = len(values[0])
    if valid is None:
        valid = [np.ones(L, bool) for _ in values]
    names = names or [f"s{d}" for d in range(len(values))]
    block = Block(values, valid)
    return MultiSeries([SourceMeta(n, dim=v.shape[1]) for n, v in zip(names, values)], [block])


def random_library(rng, n_samples=12, n_sources=1, past=2, future=2, dim=1):
    arrays = [rng.standard_normal((n_samples, dim)) for _ in range(n_sources)]
    series = make_series(arrays)
    return build_library(series, LibraryConfig(past, future))


# ---------------------------------------------------------------------------
# Brute-force oracles (independent of the package code paths)
# ---------------------------------------------------------------------------

def oracle_site(a, b, xi, shape):
    d = math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(np.atleast_1d(a), np.atleast_1d(b))))
    if shape == "gaussian":
        return math.exp(-0.5 * (d / xi) ** 2)
    return math.exp(-d / xi)


def oracle_sequence_kernel(wins_a, wins_b, xis, *, shapes=None, weights=None,
                           temporal="geometric", source_agg="geometric",
                           source_weights=None, decays=None, normalize=True):
    """Literal three-stage evaluation: site kernels, temporal then source rule.

    wins_a/wins_b: per-source windows, each (length, dim). decays: per-source
    weight arrays already in window index order (most recent past last).
    """
    n_sources = len(wins_a)
    shapes = shapes or ["gaussian"] * n_sources
    source_weights = source_weights if source_weights is not None else [1.0] * n_sources
    per_source = []
    totals = []
    for d in range(n_sources):
        wa, wb = np.atleast_2d(wins_a[d]), np.atleast_2d(wins_b[d])
        ell = wa.shape[0]
        w = np.ones(ell) if decays is None else np.asarray(decays[d], float)
        sites = [oracle_site(wa[t], wb[t], xis[d], shapes[d]) for t in range(ell)]
        if temporal == "geometric":
            val = 1.0
            for t in range(ell):
                val *= sites[t] ** w[t]
        else:
            val = sum(w[t] * sites[t] for t in range(ell))
            if normalize:
                val /= w.sum()
        per_source.append(val)
        totals.append(w.sum())
    if source_agg == "geometric":
        out = 1.0
        for d in range(n_sources):
            out *= per_source[d] ** source_weights[d]
        return out
    out = sum(sw * v for sw, v in zip(source_weights, per_source))
    if normalize:
        out /= sum(source_weights)
    return out


def oracle_gram(windows_by_source, xis, **kw):
    """(N, N) Gram by double loop over oracle_sequence_kernel."""
    n = windows_by_source[0].shape[0]
    g = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            g[i, j] = oracle_sequence_kernel(
                [w[i] for w in windows_by_source], [w[j] for w in windows_by_source], xis, **kw)
    return g


def oracle_coefficients(gx, lam):
    n = gx.shape[0]
    return np.linalg.solve(gx + lam * n * np.eye(n), gx)


def oracle_state_gram(A, gy):
    n = A.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for l in range(n):
                for m in range(n):
                    acc += A[l, i] * A[m, j] * gy[l, m]
            out[i, j] = acc
    return (out + out.T) / 2.0


def oracle_diffusion_operator(gcs):
    g = np.where(gcs < 0, 0.0, np.asarray(gcs, float))
    n = g.shape[0]
    q = g.sum(axis=1)
    k = np.empty_like(g)
    for i in range(n):
        for j in range(n):
            k[i, j] = g[i, j] / (q[i] * q[j])
    r = k.sum(axis=1)
    p = np.empty_like(k)
    for i in range(n):
        for j in range(n):
            p[i, j] = k[i, j] / r[i]
    return p, r


def oracle_spectral(p, r):
    """Direct nonsymmetric eigensolve, normalized like the package output."""
    vals, vecs = np.linalg.eig(p)
    assert np.abs(vals.imag).max() < 1e-8
    vals, vecs = vals.real, vecs.real
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    density = r / r.sum()
    psi = np.empty_like(vecs)
    for j in range(vecs.shape[1]):
        v = vecs[:, j]
        scale = math.sqrt(float(np.sum(density * v * v)))
        v = v / scale
        i = int(np.argmax(np.abs(v)))
        psi[:, j] = -v if v[i] < 0 else v
    return vals, psi, density


def oracle_anchor_count(valid_by_source, past, future):
    """Brute-force window scan over one block."""
    L = len(valid_by_source[0])
    count = 0
    for t in range(L):
        ok = True
        for d, flags in enumerate(valid_by_source):
            lo, hi = t - past[d] + 1, t + future[d]
            if lo < 0 or hi >= L or not all(flags[lo:hi + 1]):
                ok = False
                break
        if ok:
            count += 1
    return count


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
