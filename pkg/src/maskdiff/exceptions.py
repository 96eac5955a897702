"""Exception types raised by maskdiff."""


class MaskDiffError(Exception):
    """Base class for every error raised by this package."""


class SpecMismatchError(MaskDiffError, ValueError):
    """Two objects live on different ``(d, K)`` token spaces."""


class DenseCapError(MaskDiffError, MemoryError):
    """A dense ``K**d`` vector was requested above the configured cap."""


class ZeroProbabilityError(MaskDiffError, ArithmeticError):
    """A density ratio was conditioned on a state of zero probability."""


class TargetFileError(MaskDiffError, ValueError):
    """A target-distribution file is malformed or violates the no-mask rule."""


class ScheduleError(MaskDiffError, ValueError):
    """Sampler schedule parameters are inconsistent."""


class RateBoundViolation(MaskDiffError, RuntimeError):
    """A uniformization bound was smaller than the outgoing rate it must dominate."""
