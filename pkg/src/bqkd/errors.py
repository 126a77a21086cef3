"""Exception hierarchy shared by every module of the package."""


class BQKDError(Exception):
    """Base class for all errors raised by :mod:`bqkd`."""


class DimensionNotEven(BQKDError, ValueError):
    pass


class DimensionTooSmall(BQKDError, ValueError):
    pass


class DimensionMismatch(BQKDError, ValueError):
    pass


class UnsupportedDimension(BQKDError, ValueError):
    pass


class InvalidPartition(BQKDError, ValueError):
    pass


class NotUnitary(BQKDError, ValueError):
    pass


class NotNormalized(BQKDError, ValueError):
    pass


class IndexOutOfRange(BQKDError, IndexError):
    pass


class DirectionUnsupported(BQKDError, ValueError):
    pass


class MissingAncillaMap(BQKDError, ValueError):
    pass


class ConfigInvalid(BQKDError, ValueError):
    pass


class ConfigMismatch(BQKDError):
    """Peers were started with different run configurations."""


class TransportFailure(BQKDError):
    """The channel closed or delivered something unusable."""


class FramingError(TransportFailure):
    """A frame could not be parsed as a wire message."""
