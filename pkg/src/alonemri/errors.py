"""Exception types shared across the package."""


class AloneError(Exception):
    """Base class for all package errors."""


class DimensionError(AloneError, ValueError):
    """Shapes or lengths of operands do not match."""


class FormatError(AloneError, ValueError):
    """A binary or text file does not conform to its documented format."""


class GeometryError(AloneError, ValueError):
    """Patch geometry violates its tiling invariants."""


class PreconditionError(AloneError, ValueError):
    """A documented precondition of an operation does not hold."""


class DivergenceError(AloneError, ArithmeticError):
    """An iterative solver produced a non-finite residual."""


class ConfigError(AloneError, ValueError):
    """A run configuration is malformed or contains unknown keys."""
