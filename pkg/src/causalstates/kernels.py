"""Sequence kernels over heterogeneous sources and their Gram matrices.

Kernels are assembled in three stages:

  1. a site-wise kernel per source, combining a metric (euclidean for real
     vectors, discrete for symbols) with a radial shape (gaussian or
     laplacian) and a bandwidth in data units;
  2. aggregation across the time indices of a window, either geometric
     (weighted product) or arithmetic (weighted sum), with a non-increasing
     decay profile damping samples farther from the present. For past
     windows the decay is mirrored so the most recent sample always carries
     the first weight;
  3. aggregation across sources, again geometric or arithmetic, with
     positive source weights.

With `normalize` set every arithmetic stage is divided by its self-kernel
value, so the kernel of any window with itself is exactly 1. Geometric
stages accumulate in the log domain, which avoids underflow for long
windows and turns the gaussian product into a single weighted squared
distance.

The quadratic Gram assembly dispatches to a compiled core when the
extension built from ``_gramcore.pyx`` is importable, and to the numpy
backend in ``_grampy`` otherwise. Both compute each (i, j) entry with a
fixed reduction order, so results do not depend on how rows are split
across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .series import REAL, SYMBOL, MultiSeries, SequenceLibrary

try:  # compiled core is optional; the numpy backend is a drop-in
    import os as _os

    if _os.environ.get("CAUSALSTATES_NO_EXT"):
        raise ImportError("compiled backend disabled by CAUSALSTATES_NO_EXT")
    from . import _gramcore as _core
except ImportError:  # pragma: no cover - depends on the build environment
    _core = None
from . import _grampy as _pycore

EUCLIDEAN = "euclidean"
DISCRETE = "discrete"
GAUSSIAN = "gaussian"
LAPLACIAN = "laplacian"
GEOMETRIC = "geometric"
ARITHMETIC = "arithmetic"

_SHAPE_CODE = {GAUSSIAN: 0, LAPLACIAN: 1}
_TEMPORAL_CODE = {GEOMETRIC: 0, ARITHMETIC: 1}


def backend_name() -> str:
    return "compiled" if _core is not None else "python"


@dataclass(frozen=True)
class SourceKernelSpec:
    """Site-wise kernel for one source: metric, shape, bandwidth.

    bandwidth None means "use the source standard deviation", resolved
    against a concrete series by `resolve_spec`.
    """

    metric: str = EUCLIDEAN
    shape: str = GAUSSIAN
    bandwidth: float | None = None

    def __post_init__(self):
        if self.metric not in (EUCLIDEAN, DISCRETE):
            raise ValidationError(f"unknown metric {self.metric!r}")
        if self.shape not in (GAUSSIAN, LAPLACIAN):
            raise ValidationError(f"unknown kernel shape {self.shape!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValidationError("bandwidth must be positive")


@dataclass(frozen=True)
class DecayProfile:
    """Weights omega(tau), tau = 1..len, damping sites away from the present.

    uniform: omega = 1. exponential: omega(tau) = exp(-rate (tau - 1)).
    power: omega(tau) = tau ** -exponent. All strictly positive and
    non-increasing.
    """

    kind: str = "uniform"
    rate: float | None = None
    exponent: float | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "exponential", "power"):
            raise ValidationError(f"unknown decay kind {self.kind!r}")
        if self.kind == "exponential" and not (self.rate or 0) > 0:
            raise ValidationError("exponential decay needs rate > 0")
        if self.kind == "power" and not (self.exponent or 0) > 0:
            raise ValidationError("power decay needs exponent > 0")

    def weights(self, n: int) -> np.ndarray:
        tau = np.arange(1, n + 1, dtype=float)
        if self.kind == "uniform":
            return np.ones(n)
        if self.kind == "exponential":
            return np.exp(-self.rate * (tau - 1.0))
        return tau ** -self.exponent


@dataclass
class KernelSpec:
    """Full kernel ledger: one site-wise spec per source plus aggregation rules."""

    sources: list[SourceKernelSpec] = field(default_factory=lambda: [SourceKernelSpec()])
    temporal_aggregation: str = GEOMETRIC
    decay: DecayProfile = field(default_factory=DecayProfile)
    source_aggregation: str = GEOMETRIC
    source_weights: object = None
    normalize: bool = True

    def __post_init__(self):
        if not self.sources:
            raise ValidationError("kernel spec needs at least one source")
        if self.temporal_aggregation not in (GEOMETRIC, ARITHMETIC):
            raise ValidationError("temporal_aggregation must be geometric or arithmetic")
        if self.source_aggregation not in (GEOMETRIC, ARITHMETIC):
            raise ValidationError("source_aggregation must be geometric or arithmetic")
        if self.source_weights is None:
            self.source_weights = np.ones(len(self.sources))
        else:
            self.source_weights = np.asarray(self.source_weights, dtype=float)
        if self.source_weights.shape != (len(self.sources),):
            raise ValidationError("need one weight per source")
        if np.any(self.source_weights <= 0):
            raise ValidationError("source weights must be positive")


@dataclass
class GramPair:
    """Symmetric Gram matrices over library pasts (gx) and futures (gy)."""

    gx: np.ndarray
    gy: np.ndarray

    @property
    def n(self) -> int:
        return self.gx.shape[0]


def resolve_spec(spec: KernelSpec, series: MultiSeries) -> KernelSpec:
    """Fill default bandwidths and validate metric/source-kind pairing."""
    if len(spec.sources) != series.n_sources:
        raise ValidationError(
            f"kernel spec has {len(spec.sources)} sources, series has {series.n_sources}"
        )
    resolved = []
    for d, (src, meta) in enumerate(zip(spec.sources, series.sources)):
        if meta.kind == SYMBOL and src.metric != DISCRETE:
            raise ValidationError(f"source {meta.name!r} is symbolic: use the discrete metric")
        if meta.kind == REAL and src.metric != EUCLIDEAN:
            raise ValidationError(f"source {meta.name!r} is real-valued: use the euclidean metric")
        if src.bandwidth is None:
            if meta.kind != REAL:
                raise ValidationError(
                    f"source {meta.name!r}: no bandwidth default for symbol sources"
                )
            std = series.source_std(d)
            if std == 0:
                raise ValidationError(f"source {meta.name!r} is constant: set a bandwidth")
            src = replace(src, bandwidth=std)
        resolved.append(src)
    return replace(spec, sources=resolved, source_weights=spec.source_weights.copy())


def sitewise_eval(spec: SourceKernelSpec, a, b) -> float:
    """Kernel value between two single-site values. In (0, 1], 1 iff a == b."""
    if spec.bandwidth is None:
        raise ValidationError("bandwidth is unset; resolve the spec against a series first")
    if spec.metric == DISCRETE:
        if isinstance(a, (np.ndarray, list, tuple)) or isinstance(b, (np.ndarray, list, tuple)):
            raise ValidationError("discrete metric compares scalar symbols")
        dist = 0.0 if a == b else 1.0
    else:
        av = np.atleast_1d(np.asarray(a, dtype=float))
        bv = np.atleast_1d(np.asarray(b, dtype=float))
        if av.shape != bv.shape:
            raise ValidationError("value shapes differ")
        dist = math.sqrt(float(np.sum((av - bv) ** 2)))
    if spec.shape == GAUSSIAN:
        return math.exp(-0.5 * (dist / spec.bandwidth) ** 2)
    return math.exp(-dist / spec.bandwidth)


def _decay_for_side(spec: KernelSpec, length: int, side: str) -> np.ndarray:
    w = spec.decay.weights(length)
    # tau = 1 is the sample adjacent to the present; past windows are stored
    # oldest first, so their weights run in reverse index order
    return w[::-1].copy() if side == "past" else w


def _as_window_stack(src: SourceKernelSpec, win) -> np.ndarray:
    """Normalise one window to a stacked array with a leading batch axis."""
    arr = np.asarray(win)
    if src.metric == DISCRETE:
        if arr.ndim != 1:
            raise ValidationError("symbol window must be 1-D")
        if np.any(arr < 0):
            raise ValidationError("window contains missing symbols")
        return arr.astype(np.int64)[None, :]
    arr = arr.astype(float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValidationError("real window must be (length, dim)")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("window contains missing values")
    return np.ascontiguousarray(arr)[None, :, :]


def _cross_source(src: SourceKernelSpec, Xa, Xb, w, temporal: str) -> np.ndarray:
    """Per-source temporal aggregate for all (a, b) pairs.

    Returns the log-domain aggregate for geometric temporal aggregation and
    the linear-domain aggregate for arithmetic.
    """
    out = np.empty((Xa.shape[0], Xb.shape[0]))
    shape_code = _SHAPE_CODE[src.shape]
    temporal_code = _TEMPORAL_CODE[temporal]
    inv_xi = 1.0 / src.bandwidth
    backend = _core if _core is not None else _pycore
    if src.metric == DISCRETE:
        backend.cross_symbol(Xa, Xb, out, w, inv_xi, shape_code, temporal_code)
    else:
        backend.cross_real(Xa, Xb, out, w, inv_xi, shape_code, temporal_code)
    return out


def _combine_sources(mats: list[np.ndarray], spec: KernelSpec, weight_totals: list[float]):
    """Apply normalization and source aggregation to per-source aggregates."""
    w = spec.source_weights
    geometric_time = spec.temporal_aggregation == GEOMETRIC
    if not geometric_time and spec.normalize:
        mats = [m / s for m, s in zip(mats, weight_totals)]
    if spec.source_aggregation == GEOMETRIC:
        total = np.zeros_like(mats[0])
        for wd, m in zip(w, mats):
            total += wd * (m if geometric_time else np.log(m))
        return np.exp(total)
    total = np.zeros_like(mats[0])
    for wd, m in zip(w, mats):
        total += wd * (np.exp(m) if geometric_time else m)
    if spec.normalize:
        total /= w.sum()
    return total


def sequence_kernel(spec: KernelSpec, a, b, side: str = "past") -> float:
    """Kernel between two windows, each a list of per-source arrays.

    Real windows are (length, dim) arrays (1-D accepted for scalars),
    symbol windows are 1-D integer code arrays. Window lengths may differ
    across sources but must agree between `a` and `b` per source.
    """
    if side not in ("past", "future"):
        raise ValidationError("side must be 'past' or 'future'")
    if len(a) != len(spec.sources) or len(b) != len(spec.sources):
        raise ValidationError("need one window per source")
    mats, totals = [], []
    for src, wa, wb in zip(spec.sources, a, b):
        Xa = _as_window_stack(src, wa)
        Xb = _as_window_stack(src, wb)
        if Xa.shape[1:] != Xb.shape[1:]:
            raise ValidationError("window length mismatch between the two sequences")
        w = _decay_for_side(spec, Xa.shape[1], side)
        mats.append(_cross_source(src, Xa, Xb, w, spec.temporal_aggregation))
        totals.append(w.sum())
    return float(_combine_sources(mats, spec, totals)[0, 0])


def _library_stacks(library: SequenceLibrary, spec: KernelSpec, side: str):
    stacks, weights, totals = [], [], []
    lens = library.past_lens if side == "past" else library.future_lens
    for d, src in enumerate(spec.sources):
        win = library.past_windows(d) if side == "past" else library.future_windows(d)
        if src.metric == DISCRETE:
            stack = win.astype(np.int64)
        else:
            stack = np.ascontiguousarray(win.astype(float))
        w = _decay_for_side(spec, int(lens[d]), side)
        stacks.append(stack)
        weights.append(w)
        totals.append(w.sum())
    return stacks, weights, totals


def _row_chunks(n: int, threads: int) -> list[tuple[int, int]]:
    """Split rows of an upper triangle into chunks of roughly equal work."""
    threads = max(1, min(threads, n))
    work = np.arange(n, 0, -1, dtype=float)
    target = work.sum() / threads
    chunks, start, acc = [], 0, 0.0
    for i in range(n):
        acc += work[i]
        if acc >= target and len(chunks) < threads - 1:
            chunks.append((start, i + 1))
            start, acc = i + 1, 0.0
    chunks.append((start, n))
    return [c for c in chunks if c[0] < c[1]]


def _sym_source(src: SourceKernelSpec, X, w, temporal: str, threads: int) -> np.ndarray:
    n = X.shape[0]
    out = np.empty((n, n))
    shape_code = _SHAPE_CODE[src.shape]
    temporal_code = _TEMPORAL_CODE[temporal]
    inv_xi = 1.0 / src.bandwidth
    use_core = _core is not None
    backend = _core if use_core else _pycore
    fn = backend.sym_symbol if src.metric == DISCRETE else backend.sym_real
    chunks = _row_chunks(n, threads) if use_core and threads > 1 else [(0, n)]
    if len(chunks) > 1:
        import concurrent.futures

        with concurrent.futures.ThreadPoolExecutor(len(chunks)) as pool:
            futs = [pool.submit(fn, X, out, w, inv_xi, shape_code, temporal_code, lo, hi)
                    for lo, hi in chunks]
            for f in futs:
                f.result()
    else:
        for lo, hi in chunks:
            fn(X, out, w, inv_xi, shape_code, temporal_code, lo, hi)
    lower = np.tril_indices(n, -1)
    out[lower] = out.T[lower]
    return out


def _gram_side(library: SequenceLibrary, spec: KernelSpec, side: str, threads: int) -> np.ndarray:
    stacks, weights, totals = _library_stacks(library, spec, side)
    mats = [
        _sym_source(src, X, w, spec.temporal_aggregation, threads)
        for src, X, w in zip(spec.sources, stacks, weights)
    ]
    return _combine_sources(mats, spec, totals)


def gram_pair(library: SequenceLibrary, spec: KernelSpec, threads: int = 1) -> GramPair:
    """Gram matrices over all library pasts and futures.

    Only the upper triangle is evaluated; each entry uses a fixed reduction
    order so the result is independent of the thread count.
    """
    if library.n_pairs == 0:
        raise ValidationError("library is empty")
    spec = resolve_spec(spec, library.series)
    gx = _gram_side(library, spec, "past", threads)
    gy = _gram_side(library, spec, "future", threads)
    return GramPair(gx=gx, gy=gy)


def cross_kernel_vector(library: SequenceLibrary, spec: KernelSpec, query,
                        side: str = "past") -> np.ndarray:
    """k(query, x_i) for every library entry; query is a per-source window list."""
    spec = resolve_spec(spec, library.series)
    stacks, weights, totals = _library_stacks(library, spec, side)
    mats = []
    for src, X, w, q in zip(spec.sources, stacks, weights, query):
        Q = _as_window_stack(src, q)
        if Q.shape[1:] != X.shape[1:]:
            raise ValidationError("query window does not conform to the library config")
        mats.append(_cross_source(src, Q, X, w, spec.temporal_aggregation))
    return _combine_sources(mats, spec, totals)[0]


# ---------------------------------------------------------------------------
# Runtime self-test
# ---------------------------------------------------------------------------

@dataclass
class KernelAlgebraReport:
    ok: bool
    checks: list[str]
    failure: str | None = None


def kernel_algebra_check(spec: KernelSpec, n_windows: int = 6, window_len: int = 4,
                         seed: int = 0, eval_fn=None) -> KernelAlgebraReport:
    """Probe a kernel configuration on random windows.

    Verifies symmetry, unit self-similarity (when normalized), the (0, 1]
    range, and positive semidefiniteness of the resulting Gram matrix.
    Reports the first violated property; `eval_fn` lets tests inject a
    corrupted evaluator.
    """
    rng = np.random.default_rng(seed)
    ev = eval_fn or (lambda a, b: sequence_kernel(spec, a, b, side="past"))
    windows = []
    for _ in range(n_windows):
        ws = []
        for src in spec.sources:
            if src.metric == DISCRETE:
                ws.append(rng.integers(0, 3, size=window_len))
            else:
                ws.append(rng.standard_normal((window_len, 1)))
        windows.append(ws)

    checks = []
    gram = np.empty((n_windows, n_windows))
    for i in range(n_windows):
        for j in range(n_windows):
            gram[i, j] = ev(windows[i], windows[j])

    if not np.array_equal(gram, gram.T):
        return KernelAlgebraReport(False, checks, "kernel is not symmetric")
    checks.append("symmetry")
    if spec.normalize and not np.allclose(np.diag(gram), 1.0, atol=1e-12):
        return KernelAlgebraReport(False, checks, "self-kernel is not 1 with normalize set")
    checks.append("self-similarity")
    if np.any(gram <= 0) or np.any(gram > np.diag(gram).max() + 1e-12):
        return KernelAlgebraReport(False, checks, "kernel values leave (0, self]")
    checks.append("range")
    min_eig = float(np.linalg.eigvalsh((gram + gram.T) / 2).min())
    if min_eig < -1e-8 * np.trace(gram) / n_windows:
        return KernelAlgebraReport(False, checks, f"Gram is not PSD (min eigenvalue {min_eig:.3e})")
    checks.append("psd")
    return KernelAlgebraReport(True, checks)
