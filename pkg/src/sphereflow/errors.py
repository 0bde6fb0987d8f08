"""Exception types shared across the package."""


class SphereFlowError(Exception):
    """Base class for all package errors."""


class ZeroVector(SphereFlowError, ValueError):
    pass


class NonPositiveRadius(SphereFlowError, ValueError):
    pass


class RadiusMismatch(SphereFlowError, ValueError):
    pass


class DimensionMismatch(SphereFlowError, ValueError):
    pass


class LengthMismatch(SphereFlowError, ValueError):
    pass


class AntipodalPoints(SphereFlowError, ValueError):
    """Raised when a geodesic is requested between (near-)antipodal points.

    ``indices`` holds the offending batch rows so callers can re-pair them.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)


class NonFiniteCost(SphereFlowError, ValueError):
    pass


class NotConverged(UserWarning):
    """Warning emitted when Sinkhorn hits ``max_iter`` before ``tol``."""


class TooLarge(SphereFlowError, ValueError):
    pass


class DegeneratePlan(SphereFlowError, ValueError):
    pass


class EmptyBatch(SphereFlowError, ValueError):
    pass


class OddDim(SphereFlowError, ValueError):
    pass


class ShapeMismatch(SphereFlowError, ValueError):
    pass


class NonFiniteActivation(SphereFlowError, FloatingPointError):
    pass


class NonFiniteState(SphereFlowError, FloatingPointError):
    pass


class InvalidVariant(SphereFlowError, ValueError):
    pass


class ConfigError(SphereFlowError, ValueError):
    pass


class FormatError(SphereFlowError, ValueError):
    """Base for binary file format problems."""


class BadMagic(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class BadCheckpoint(FormatError):
    pass
