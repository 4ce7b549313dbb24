"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Input violates a documented precondition (shape, range, finiteness)."""


class DegenerateInputError(RuntimeError):
    """Estimation input is degenerate (too few pairs, collinear points, ...).

    ``kind`` names the degeneracy so callers can branch on it.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class NoConsensusError(RuntimeError):
    """Robust estimation found no model supported by enough inliers."""


class UnscorableError(RuntimeError):
    """An episode has no frame with correspondences to score."""
