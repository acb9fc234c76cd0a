"""Exception types raised across the package."""


class SeqPosteriorError(Exception):
    """Base class for all seqposterior errors."""


class LengthMismatch(SeqPosteriorError, ValueError):
    """A sequence does not have the length required by the design."""


class InconsistentTrajectory(SeqPosteriorError, ValueError):
    """Observed cumulative means continue past a mandated stopping stage."""


class NumericalUnderflow(SeqPosteriorError, ArithmeticError):
    """A log-probability fell below the configured underflow floor."""


class GridTooNarrow(SeqPosteriorError, ValueError):
    """Too much conditional posterior mass sits at the edges of the grid."""


class MismatchedGrids(SeqPosteriorError, ValueError):
    """Two grid densities do not share the same support points."""


class NoRoot(SeqPosteriorError, RuntimeError):
    """Root finding failed to bracket or converge."""


class NonmonotoneSpending(SeqPosteriorError, ValueError):
    """A spending function produced a negative increment."""


class DomainError(SeqPosteriorError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ConfigError(SeqPosteriorError, ValueError):
    """A run configuration is malformed or incomplete."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")
