"""Exception hierarchy shared across the package."""


class GestureWireError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GestureWireError):
    """Tensor dimensions are incompatible with the requested operation."""


class ConfigError(GestureWireError):
    """A configuration value violates its documented constraints."""


class ParseError(GestureWireError):
    """A file could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class OrderingError(GestureWireError):
    """Sample timestamps are not strictly increasing."""


class DataError(GestureWireError):
    """Input data violates a documented precondition."""


class BundleError(GestureWireError):
    """A model bundle is incompatible or corrupt."""
