"""Exception types shared across the package."""


class HeraldLinkError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(HeraldLinkError, ValueError):
    """A numeric argument is outside its documented domain."""


class DegenerateConditionError(HeraldLinkError):
    """A conditional state was requested whose probability is numerically zero."""


class InvalidStateError(HeraldLinkError):
    """A truncated state violated a physicality invariant (trace, leakage, positivity)."""


class ScenarioFormatError(HeraldLinkError):
    """A scenario file could not be parsed or contains unknown sections or keys."""


class FitError(HeraldLinkError):
    """A fit is degenerate, ill-conditioned, or produced an unusable result."""


class InsufficientDataError(HeraldLinkError):
    """An estimator was handed fewer events than it needs."""


class CrossingNotFoundError(HeraldLinkError):
    """A root search found no crossing in its bracket."""
