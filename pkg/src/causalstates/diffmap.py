"""Diffusion coordinates on the state proximity matrix.

The proximity matrix is density-normalized twice: first the symmetric
conjugation K = Q^-1 G Q^-1 with Q the row sums of G, which removes the
sampling-density bias, then row normalization P = R^-1 K with R the row
sums of K, which yields a row-stochastic operator. P is conjugate to the
symmetric matrix S = R^1/2 P R^-1/2, so its spectrum is real and the
eigendecomposition is done on S.

Right eigenvectors are recovered as psi = R^-1/2 u and scaled to unit norm
against the stationary density, which makes the trivial eigenvector
constant 1. Eigenvalues are sorted by decreasing magnitude and each
eigenvector's sign is fixed so its largest-magnitude entry is positive,
making repeated runs bit-comparable. The coordinates of sample i are
(psi_1[i], ..., psi_M[i]); the trivial psi_0 is reported separately and
never part of the coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError

# eigenvalue magnitudes at or below this floor count as numerically zero
# when scanning the decay profile for the largest drop
_GAP_FLOOR = 1e-10
# relative clamp mass on the state Gram above which the regularization or
# the bandwidths deserve a second look
_CLAMP_WARN = 1e-3


@dataclass
class DiffusionConfig:
    """n_components: explicit count, or "auto".

    Auto selection uses the residual rule when residual_threshold is set
    (smallest M whose mean residual diffusion distance against the full
    embedding stays below the threshold) and the spectral-gap rule
    otherwise.
    """

    n_components: object = "auto"
    residual_threshold: float | None = None

    def __post_init__(self):
        if isinstance(self.n_components, str):
            if self.n_components != "auto":
                raise ValidationError("n_components must be an integer or 'auto'")
        elif int(self.n_components) < 1:
            raise ValidationError("n_components must be >= 1")
        if self.residual_threshold is not None and self.residual_threshold < 0:
            raise ValidationError("residual_threshold must be >= 0")


@dataclass
class DiffusionOperator:
    """Row-stochastic operator plus the conjugacy data needed downstream."""

    matrix: np.ndarray
    row_masses: np.ndarray
    clamped_mass: float = 0.0
    clamped_max: float = 0.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def diffusion_operator(gcs: np.ndarray, warn_clamp: bool = True) -> DiffusionOperator:
    """Two-stage density normalization of a symmetric state Gram matrix.

    Small negative entries (regularization noise) are clamped to zero
    before normalizing; the clamped mass is reported and large clamps
    trigger a warning unless `warn_clamp` is off (the clamp statistics stay
    available on the result either way). A row with no similarity mass at
    all is an isolated state and raises.
    """
    g = np.asarray(gcs, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValidationError("state Gram must be square")
    neg = g < 0
    clamped_mass = float(-g[neg].sum()) if neg.any() else 0.0
    clamped_max = float(-g[neg].min()) if neg.any() else 0.0
    diag_scale = float(np.mean(np.diag(g))) or 1.0
    if neg.any():
        g = np.where(neg, 0.0, g)
        if warn_clamp and clamped_max > _CLAMP_WARN * abs(diag_scale):
            warnings.warn(
                f"clamped negative proximity entries up to {clamped_max:.3e} "
                f"({clamped_max / abs(diag_scale):.2e} of the diagonal scale); "
                "consider a larger regularization or wider bandwidths",
                stacklevel=2,
            )
    q = g.sum(axis=1)
    dead = np.nonzero(q <= 0)[0]
    if dead.size:
        raise NumericalError(
            f"state {int(dead[0])} has no similarity mass; cannot normalize"
        )
    k = g / np.outer(q, q)
    r = k.sum(axis=1)
    p = k / r[:, None]
    return DiffusionOperator(matrix=p, row_masses=r,
                             clamped_mass=clamped_mass, clamped_max=clamped_max)


@dataclass
class DiffusionEmbedding:
    """Spectral embedding of a diffusion operator.

    eigenvalues holds the full spectrum sorted by decreasing magnitude
    (trivial eigenvalue 1 first). components holds every nontrivial right
    eigenvector as a column, so column j is the coordinate psi_{j+1};
    the retained coordinates are the first n_components columns.
    residual_means[m] is the mean over samples of the diffusion distance
    between the m-component embedding and the full one.
    """

    eigenvalues: np.ndarray
    components: np.ndarray
    psi0: np.ndarray
    density: np.ndarray
    n_components: int
    gap_index: int | None
    degenerate: bool
    residual_means: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.components.shape[0]

    @property
    def coordinates(self) -> np.ndarray:
        return self.components[:, : self.n_components]


def _sign_fix(vec: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


def _order_spectrum(vals: np.ndarray, vecs: np.ndarray):
    """Sort by decreasing magnitude; exact ties break on sign-fixed columns."""
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    mags = np.abs(vals)
    i = 0
    while i < len(vals) - 1:
        j = i + 1
        while j < len(vals) and mags[j] == mags[i]:
            j += 1
        if j - i > 1:
            block = sorted(range(i, j),
                           key=lambda c: tuple(_sign_fix(vecs[:, c])))
            vals[i:j] = vals[block]
            vecs[:, i:j] = vecs[:, block]
        i = j
    return vals, vecs


def _largest_gap_index(eigenvalues: np.ndarray) -> int | None:
    """Index of the eigenvalue after the largest drop in the decay profile.

    Uses the plain eigengap |lambda_j| - |lambda_j+1|: on geometrically
    decaying spectra the drop ratio grows toward the numerical-rank tail,
    so ranking by ratio would always flag the tail rather than structure
    near the top. The trivial pair (0, 1) is excluded and the scan stops at
    the numerical floor.
    """
    mags = np.abs(eigenvalues)
    best, best_drop = None, 0.0
    for j in range(1, len(mags) - 1):
        if mags[j] <= _GAP_FLOOR:
            break
        drop = mags[j] - mags[j + 1]
        if drop > best_drop:
            best, best_drop = j + 1, drop
    return best


def spectral_decompose(op: DiffusionOperator, config: DiffusionConfig) -> DiffusionEmbedding:
    """Eigendecomposition of the diffusion operator via its symmetric conjugate."""
    r = op.row_masses
    sqrt_r = np.sqrt(r)
    s = (op.matrix * sqrt_r[:, None]) / sqrt_r[None, :]
    try:
        vals, vecs = scipy.linalg.eigh(s, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition did not converge") from exc
    vals, vecs = _order_spectrum(vals, vecs)

    if abs(vals[0] - 1.0) > 1e-8:
        raise NumericalError(
            f"leading eigenvalue is {vals[0]!r}, expected 1 for a row-stochastic operator"
        )
    degenerate = bool(len(vals) > 1 and abs(vals[1]) >= 1.0 - 1e-12)
    if degenerate:
        warnings.warn(
            "spectrum is degenerate at 1; the embedding carries no usable components",
            stacklevel=2,
        )

    scale = np.sqrt(r.sum())
    psi = (vecs / sqrt_r[:, None]) * scale
    psi = np.apply_along_axis(_sign_fix, 0, psi)
    psi0 = psi[:, 0]
    components = psi[:, 1:]
    density = r / r.sum()

    sq = (components * vals[1:][None, :]) ** 2
    suffix = np.concatenate(
        [np.cumsum(sq[:, ::-1], axis=1)[:, ::-1], np.zeros((len(r), 1))], axis=1
    )
    residual_means = np.sqrt(suffix).mean(axis=0)

    emb = DiffusionEmbedding(
        eigenvalues=vals,
        components=components,
        psi0=psi0,
        density=density,
        n_components=1,
        gap_index=_largest_gap_index(vals),
        degenerate=degenerate,
        residual_means=residual_means,
    )
    emb.n_components = select_components(emb, config)

    retained = emb.coordinates
    resid = op.matrix @ retained - retained * emb.eigenvalues[1 : emb.n_components + 1][None, :]
    scale_inf = np.abs(retained).max(axis=0)
    bad = np.abs(resid).max(axis=0) > 1e-8 * np.maximum(scale_inf, 1e-300)
    if bad.any():
        warnings.warn("eigenpair residuals exceed tolerance on retained components",
                      stacklevel=2)
    return emb


def select_components(emb: DiffusionEmbedding, config: DiffusionConfig) -> int:
    """Number of coordinates to retain.

    Explicit counts pass through. Otherwise the residual rule applies when
    a threshold is configured, falling back to the spectral-gap heuristic;
    the gap index is always available on the embedding as a diagnostic.
    """
    n = emb.n
    if not isinstance(config.n_components, str):
        m = int(config.n_components)
        if m >= n:
            raise ValidationError(f"n_components={m} must be smaller than the library size {n}")
        return m
    if config.residual_threshold is not None:
        below = np.nonzero(emb.residual_means <= config.residual_threshold)[0]
        m = int(below[0]) if below.size else n - 1
        if m >= n - 1:
            m = n - 1
            if emb.residual_means[: n - 1].min() > config.residual_threshold:
                warnings.warn(
                    "residual threshold is only reached with the full component set",
                    stacklevel=2,
                )
        return max(m, 1)
    if emb.gap_index is not None and emb.gap_index >= 2:
        return emb.gap_index - 1
    return n - 1


def diffusion_distance(emb: DiffusionEmbedding, i: int, l: int,
                       m_used: int | None = None) -> float:
    """Eigenvalue-weighted distance between two embedded states."""
    m = emb.n_components if m_used is None else int(m_used)
    if m < 0 or m > emb.components.shape[1]:
        raise ValidationError(f"m_used={m} outside the available components")
    lam = emb.eigenvalues[1 : m + 1]
    diff = emb.components[i, :m] - emb.components[l, :m]
    return float(np.sqrt(np.sum((lam * diff) ** 2)))
