"""Exception hierarchy.

Two broad families matter for the CLI exit codes: validation problems
(bad configuration, malformed input, empty results) and numerical
failures (conditioning, degenerate geometry, non-convergence).
"""


class CausalStatesError(Exception):
    """Base class for all package errors."""


class ValidationError(CausalStatesError):
    """Invalid configuration, schema, or input data."""


class NumericalError(CausalStatesError):
    """A numerical procedure failed (conditioning, degeneracy, ...)."""


class EmptyLibraryError(ValidationError):
    """No (past, future) pair survives the window validity constraints."""


class ConditioningError(NumericalError):
    """A linear solve failed because the matrix is numerically singular."""


class DegenerateFrameError(NumericalError):
    """A local reference frame could not be built (collinear bonds)."""
