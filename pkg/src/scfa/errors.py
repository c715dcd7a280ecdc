"""Exception types shared across the package."""


class ScfaError(Exception):
    """Base class for all errors raised by this package."""


class ZeroVarianceColumn(ScfaError):
    """A data column is constant and cannot be standardized."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} has zero variance")


class RankDeficientSample(ScfaError):
    """The sample covariance/correlation matrix is singular."""


class DidNotConverge(ScfaError):
    """An iterative fit ran out of its iteration budget.

    For the clustered fit, the partial result is attached as ``report``.
    """

    def __init__(self, message, report=None, max_iters=None):
        self.report = report
        self.max_iters = max_iters
        super().__init__(message)


class InvalidInit(ScfaError):
    """The initial partition leaves no group large enough to fit."""


class TooFewPoints(ScfaError):
    """Not enough locations for the requested neighbor count."""


class UnknownNode(ScfaError):
    """A location references a graph node that does not exist."""

    def __init__(self, node_id):
        self.node_id = node_id
        super().__init__(f"node id {node_id} not present in the graph")


class NotSymmetric(ScfaError):
    """A matrix argument that must be symmetric is not."""


class ShapeMismatch(ScfaError):
    """Two matrix sequences do not have matching shapes."""


class SizeMismatch(ScfaError):
    """Two partitions do not cover the same number of samples."""


class MissingPartition(ScfaError):
    """A per-group model list was given without group labels."""
