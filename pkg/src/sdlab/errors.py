class SDLabError(Exception):
    """Base class for all errors raised by sdlab."""


class ConfigError(SDLabError):
    pass


class KernelError(SDLabError):
    pass


class OutsideSupportError(SDLabError):
    """Convolution requested where the kernel ball leaves the measure's domain."""


class QuadratureError(SDLabError):
    pass


class UnsupportedDeformation(SDLabError):
    pass


class SingularGradientError(SDLabError):
    pass


class GrowthError(SDLabError):
    """Recession ratios diverge: the density grows faster than linearly."""


class RecessionUnavailable(SDLabError):
    pass


class ConvexityError(SDLabError):
    pass


class ISDViolation(SDLabError):
    pass


class RangeMismatch(SDLabError):
    pass


class NonNeutralSlip(SDLabError):
    pass


class DependentGenerators(SDLabError):
    pass


class SchemaMismatch(SDLabError):
    pass
