"""Exception types shared across the package.

The CLI maps each family onto a process exit code, so keep the hierarchy
flat and pick the narrowest class when raising.
"""


class AsgError(Exception):
    """Base class for all library errors."""


class ValidationError(AsgError, ValueError):
    """Bad arguments or configuration, detected before any computation."""


class FormatError(AsgError, ValueError):
    """A file does not follow its binary or text layout (magic, length, encoding)."""


class ShapeError(AsgError, ValueError):
    """Inconsistent shapes, out-of-range indices or non-finite values."""
