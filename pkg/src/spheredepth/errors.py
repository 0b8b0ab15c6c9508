"""Exception hierarchy shared by all modules."""


class SphereDepthError(ValueError):
    """Base class for every error raised by this package."""


class HemisphereViolation(SphereDepthError):
    """Point lies on or behind the horizon of a tangent plane."""


class OutOfBounds(SphereDepthError):
    pass


class UnsupportedLayout(SphereDepthError):
    pass


class ZeroNormVector(SphereDepthError):
    pass


class DimensionMismatch(SphereDepthError):
    pass


class GeometryMismatch(SphereDepthError):
    pass


class NoValidPixels(SphereDepthError):
    pass


class EmptySet(SphereDepthError):
    pass


class MalformedFile(SphereDepthError):
    pass


class UnsupportedDtype(SphereDepthError):
    pass
