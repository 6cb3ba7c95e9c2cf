"""Exception hierarchy shared across the package."""


class GoalfuseError(Exception):
    """Base class for every error raised by this package."""


class SceneFormatError(GoalfuseError):
    """A scene descriptor file is malformed (names the offending field)."""


class ValidationError(GoalfuseError):
    """A domain invariant is violated (duplicate labels, empty masks, ...)."""


class DimensionError(GoalfuseError):
    """Two grid-shaped values have incompatible geometries."""


class ContractError(GoalfuseError):
    """A documented precondition was violated by the caller."""


class DegenerateInputError(GoalfuseError):
    """Inputs are so degenerate that no meaningful prediction exists."""


class WeightFormatError(GoalfuseError):
    """A weight container file has a bad magic, version, or field encoding."""


class WeightLengthError(WeightFormatError):
    """A weight container file ended before its declared payload."""


class SchemaError(GoalfuseError):
    """A weight container does not match the network architecture schema."""


class GenerationError(GoalfuseError):
    """Synthetic data generation could not satisfy its constraints."""


class TransportError(GoalfuseError):
    """A remote call failed after exhausting its retry budget."""


class RequestError(GoalfuseError):
    """A remote endpoint rejected the request (non-retryable HTTP status)."""


class ProtocolError(GoalfuseError):
    """A remote endpoint answered with an unparsable or incomplete body."""
