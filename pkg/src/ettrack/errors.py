"""Exception types shared across the package."""


class EttrackError(Exception):
    """Base class for all errors raised by this package."""


class InvalidExtentError(EttrackError):
    """Extent matrix is not symmetric positive definite."""


class DegeneratePoseError(EttrackError):
    """Sensor/target geometry is degenerate (e.g. sensor inside the rectangle)."""


class DegenerateEdgeError(EttrackError):
    """Edge endpoints coincide (zero-length stick)."""


class InvalidParameterError(EttrackError):
    """A scalar parameter is outside its documented domain."""


class InvalidInputError(EttrackError):
    """An array argument has the wrong shape or invalid contents."""


class NumericUnderflowError(EttrackError):
    """All particle likelihoods underflowed to zero during an update."""


class UnsupportedParameterError(EttrackError):
    """A parameter value is syntactically valid but not supported."""


class ConfigError(EttrackError):
    """A scenario or filter configuration file is malformed."""
