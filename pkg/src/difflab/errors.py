"""Exception types shared across the package."""


class DiffLabError(Exception):
    """Base class for all difflab errors."""


class InvalidParams(DiffLabError):
    """Schedule parameters violate their constraints."""


class ScheduleDegenerate(DiffLabError):
    """The step-size recursion produced an unusable schedule.

    Raised when some per-step rate drops to 1/2 or below (the step-noise
    variance would be nonpositive), which signals that c1 * log(T) / T is
    too large for the requested horizon.
    """


class DimensionMismatch(DiffLabError):
    """A vector argument has the wrong dimension."""


class IndexOutOfRange(DiffLabError):
    """A step index lies outside its valid range."""


class NotUnitVector(DiffLabError):
    """A direction argument is not normalized."""


class UnsupportedKind(DiffLabError):
    """The requested sampler variant is not supported by this operation."""


class SingularCovariance(DiffLabError):
    """A covariance matrix required to be positive-definite is singular."""


class DegenerateCovariance(DiffLabError):
    """A sample covariance matrix is not positive-definite."""


class TooFewSamples(DiffLabError):
    """Not enough samples for the requested estimator."""


class InsufficientPoints(DiffLabError):
    """Too few points for a regression fit."""


class NonpositiveValue(DiffLabError):
    """A value that must be positive (for log fitting) is not."""


class ConfigInvalid(DiffLabError):
    """An experiment configuration fails validation."""


class TargetLoadFailed(DiffLabError):
    """A target specification file could not be loaded."""
