"""Exception hierarchy shared by every module."""


class PursuitError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(PursuitError, ValueError):
    """Argument outside the domain of a divergence function."""


class ParamError(PursuitError, ValueError):
    """Invalid distribution or divergence parameter."""


class SupportError(PursuitError, ValueError):
    """Reference density vanishes where the other one does not."""


class DimensionMismatch(PursuitError, ValueError):
    pass


class ZeroDirection(PursuitError, ValueError):
    pass


class SingularCovariance(PursuitError):
    pass


class DegenerateConstraint(PursuitError):
    pass


class DegenerateAxis(PursuitError):
    pass


class TooFewRetained(PursuitError):
    pass


class FloorViolation(PursuitError):
    pass


class ZeroVariance(PursuitError):
    """Per-point contributions are constant; the stopping test is inconclusive."""


class DegenerateWeights(PursuitError):
    pass


class BasisDegenerate(PursuitError):
    pass


class StructureMismatch(PursuitError):
    pass


class DegeneratePredictor(PursuitError):
    pass


class ParseError(PursuitError, ValueError):
    def __init__(self, row, column, message):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column}: {message}")


class EmptyData(PursuitError, ValueError):
    pass


class ConfigError(PursuitError, ValueError):
    """Invalid scenario configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class StepError(PursuitError):
    """A pursuit step failed; carries the level index and partial result."""

    def __init__(self, level, cause, partial=None):
        self.level = level
        self.cause = cause
        self.partial = partial
        super().__init__(f"level {level}: {type(cause).__name__}: {cause}")
