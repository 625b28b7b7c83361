"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FairRankError(Exception):
    """Base class for all package errors."""


class ValidationError(FairRankError, ValueError):
    """Input data, graph or configuration violates a documented invariant."""


class GraphError(ValidationError):
    """Causal graph is malformed (cycle, edge into the protected node, ...)."""


class UnidentifiableError(FairRankError):
    """The requested path-specific effect cannot be computed from the model.

    Raised when a child of the protected node lies both on a path inside the
    requested path set and on a causal path outside it (a recanting witness).
    """


class ConvergenceError(FairRankError):
    """An iterative solver hit its iteration cap without meeting its tolerance."""


class NonpositiveBaselineError(FairRankError):
    """E[S | c+] is not positive, so relative discrimination measures are undefined."""
