"""Exception types shared across the toolkit."""

from __future__ import annotations


class FormatError(ValueError):
    """A serialized artifact violates its container format (magic, header, codes)."""


class TruncationError(FormatError):
    """Declared dimensions are inconsistent with the payload actually present."""


class DataError(ValueError):
    """Payload bytes parse but carry invalid values (NaN/Inf, out-of-range samples)."""


class DegenerateFeatureError(ValueError):
    """A feature vector has zero norm; cosine affinity is undefined for it."""


class DegeneratePartitionError(ValueError):
    """A bipartition side has zero total association; the cut cost is undefined."""


class InfeasibleClusteringError(ValueError):
    """Requested more clusters than there are distinct points."""


class SolverError(RuntimeError):
    """Eigensolver failed to reach the requested tolerance within its budget.

    ``residuals`` carries the residual norms achieved when the budget ran out.
    """

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals
