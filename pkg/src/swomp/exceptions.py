"""Exception hierarchy shared by every module of the package."""


class SwompError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDimensionError(SwompError, ValueError):
    """An array size or count is zero, negative or inconsistent."""


class InvalidConfigurationError(SwompError, ValueError):
    """A combination of parameters is not supported (e.g. more taps than subcarriers)."""


class UnsupportedModeError(SwompError):
    """The requested quantity does not exist for this channel mode (e.g. off-grid sparse vector)."""


class IllConditionedCombinerError(SwompError, ArithmeticError):
    """A combiner Gram block could not be Cholesky factorized, even after jitter."""


class SingularSupportError(SwompError, ArithmeticError):
    """The columns indexed by a support are linearly dependent."""


class DegenerateSupportError(SingularSupportError):
    """The Fisher information on a support is not positive definite."""


class UndefinedMetricError(SwompError, ValueError):
    """A metric is undefined for the supplied input (e.g. zero-energy channel)."""
