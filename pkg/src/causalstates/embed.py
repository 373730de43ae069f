"""Regularized conditional-embedding coefficients and the state proximity matrix.

Each library past x_i is mapped to a coefficient vector alpha(x_i) solving
(G_past + lambda N I) alpha = k(x_i), where k(x_i) is the i-th column of
the past Gram matrix. The coefficient-weighted sum of future embeddings is
the empirical predictive state of that past; inner products between two
such states reduce to alpha_i' G_future alpha_j, collected for all pairs in
the state Gram matrix A^T G_future A.

The symmetric positive-definite factorization is computed once and reused
for every in-sample and out-of-sample solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConditioningError, ValidationError
from .kernels import GramPair, KernelSpec, cross_kernel_vector
from .series import SequenceLibrary

# column sums of the coefficient matrix should sit near 1 unless the past
# Gram is badly conditioned; deviations beyond this trigger a warning only
COLUMN_SUM_WARN_TOL = 0.1


@dataclass
class EmbeddingConfig:
    """regularization is the ridge added as lambda * N on the identity."""

    regularization: float = 1e-6

    def __post_init__(self):
        if self.regularization < 0:
            raise ValidationError("regularization must be >= 0")


class CoefficientSolver:
    """Cached factorization of (G_past + lambda N I) for repeated solves."""

    def __init__(self, gram: GramPair, config: EmbeddingConfig):
        n = gram.n
        lam = config.regularization
        m = gram.gx + (lam * n) * np.eye(n)
        try:
            self._factor = scipy.linalg.cho_factor(m, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(
                "past Gram matrix is numerically singular; "
                "increase the regularization value"
            ) from exc
        self.n = n

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._factor, rhs, check_finite=False)


def coefficients(gram: GramPair, config: EmbeddingConfig,
                 solver: CoefficientSolver | None = None) -> np.ndarray:
    """Coefficient matrix A with column i = alpha(x_i) for in-library pasts.

    Solved as (G_past + lambda N I) A = G_past; never forms an explicit
    inverse. Column sums far from 1 indicate conditioning trouble and emit
    a warning.
    """
    solver = solver or CoefficientSolver(gram, config)
    A = solver.solve(gram.gx)
    col_sums = A.sum(axis=0)
    worst = float(np.abs(col_sums - 1.0).max())
    if worst > COLUMN_SUM_WARN_TOL:
        warnings.warn(
            f"coefficient column sums deviate from 1 by up to {worst:.3g}; "
            "the past Gram may be ill-conditioned for this regularization",
            stacklevel=2,
        )
    return A


def coefficients_for(gram: GramPair, library: SequenceLibrary, spec: KernelSpec,
                     query_past, config: EmbeddingConfig,
                     solver: CoefficientSolver | None = None) -> np.ndarray:
    """Out-of-sample coefficients for one query past window list."""
    solver = solver or CoefficientSolver(gram, config)
    k = cross_kernel_vector(library, spec, query_past, side="past")
    return solver.solve(k)


def state_gram(A: np.ndarray, gram: GramPair) -> np.ndarray:
    """State proximity matrix A^T G_future A, symmetrized against roundoff."""
    if A.shape != gram.gy.shape:
        raise ValidationError("coefficient matrix shape does not match the Gram pair")
    m = A.T @ gram.gy @ A
    return (m + m.T) / 2.0
