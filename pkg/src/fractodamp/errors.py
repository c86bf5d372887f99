"""Exception types raised across the package."""


class FractodampError(Exception):
    """Base class for all package errors."""


class DomainError(FractodampError, ValueError):
    """An argument lies outside the domain where a formula is valid."""


class PreconditionError(FractodampError, ValueError):
    """A documented precondition of an operation does not hold."""


class ConfigError(FractodampError, ValueError):
    """A configuration document or parameter combination is invalid."""


class ShapeError(FractodampError, ValueError):
    """Array shapes do not conform to the grid they are used with."""


class InconclusiveError(FractodampError, RuntimeError):
    """A numerical classification could not reach a decision."""


class ConvergenceError(FractodampError, RuntimeError):
    """An iterative procedure failed to converge."""


class QuadratureError(FractodampError, RuntimeError):
    """A quadrature rule failed to reach the requested tolerance."""
