"""Exception types shared across the library.

The CLI maps InputError subclasses to exit code 2 and NumericalError
subclasses to exit code 3.
"""


class SurfmlError(Exception):
    """Base class for all library errors."""


class InputError(SurfmlError):
    """Bad user input: files, config values, malformed data."""


class NumericalError(SurfmlError):
    """Numerical failure: non-lengthlike segments, domain escapes, etc."""


class DomainError(NumericalError):
    """A base point (possibly after a transform) left the chart domain."""


class NonLengthlikeSegmentError(NumericalError):
    """Arc-length integrand went significantly negative along a segment."""


class SamplingError(NumericalError):
    """Rejection sampling could not produce in-domain candidates."""


class GmlParseError(InputError):
    """GML file could not be parsed; message carries a line number."""


class DisconnectedGraphError(InputError):
    """Graph has more than one connected component."""
