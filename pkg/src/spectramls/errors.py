"""Exception hierarchy shared across the toolkit.

The split between InputIOError, SchemaError and UsageError mirrors the
CLI exit-code contract (2, 3, 4); everything else maps to a generic
failure (1).
"""


class SpectraError(Exception):
    """Base class for all errors raised by this package."""


class InputIOError(SpectraError):
    """An input file is missing, truncated, or cannot be decoded."""


class SchemaError(SpectraError):
    """A file or object violates its declared structure or shape."""


class ZeroSignatureError(SchemaError):
    """A spectral signature is the zero vector, which the angular
    distance cannot handle."""


class BandMismatchError(SchemaError):
    """Cube band count and control-point band count disagree."""


class UsageError(SpectraError):
    """Arguments are out of range or inconsistent."""


class SingularSystemError(SpectraError):
    """The unregularized normal matrix is singular; retry with a
    positive ridge factor."""


class MatchingError(SpectraError):
    """The matching pipeline could not produce a usable result."""


class OutOfBoundsError(MatchingError):
    """A projected point falls entirely outside the target image."""
