"""Exception hierarchy shared by every module."""


class AnisolagError(Exception):
    """Base class for all errors raised by this package."""


class InputError(AnisolagError, ValueError):
    """Malformed or non-finite input."""


class DimensionError(InputError):
    pass


class DomainError(InputError):
    """A point lies outside the domain of a coefficient field."""


class AlignmentError(InputError):
    """A sub-box does not have its corners on grid nodes."""


class ParseError(InputError):
    """Syntax error in an expression; ``position`` is the 0-based offset."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class UnknownIdentifierError(ParseError):
    pass


class LookupFailure(AnisolagError, KeyError):
    """Unknown catalog name."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NonConvergenceError(AnisolagError):
    """An iterative limit did not settle before its schedule ran out."""

    def __init__(self, message, last_iterates=None):
        super().__init__(message)
        self.last_iterates = last_iterates


class ConsistencyError(AnisolagError):
    """An algebraic identity that must hold failed; indicates a bug."""


class OptimizationError(AnisolagError):
    pass


class HypothesisError(AnisolagError):
    """A Lagrangian fails a structural hypothesis required by an operation."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
