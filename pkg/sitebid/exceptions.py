
class SiteBidError(Exception):
    """Base class for sitebid errors."""


class SiteBidConfigurationError(SiteBidError):
    """This error is raised on configuration errors."""


class ValidationError(SiteBidError):
    """This error is raised when input data violates a documented schema or invariant."""

    def __init__(self, message: str, *, line: int = None, field: str = None):
        self.line = line
        self.field = field

        location = []

        if line is not None:
            location.append(f'line {line}')

        if field is not None:
            location.append(f'field `{field}`')

        if location:
            message = f"{', '.join(location)}: {message}"

        super().__init__(message)


class DuplicateAdError(ValidationError):
    """This error is raised when a catalog contains the same ad identifier twice."""


class UndefinedMetricError(SiteBidError):
    """This error is raised when interactive metric is requested for an ad without clicks."""


class CheckpointError(SiteBidError):
    """This error is raised when a persisted model does not match expectations."""


class NonFiniteGradientError(SiteBidError):
    """This error is raised when a gradient check encounters NaN or Inf."""


class ClassifierError(SiteBidError):
    """This error is raised on product type classification problems."""


class SingularSystemError(SiteBidError):
    """This error is raised when a linear system can not be solved."""


class InfeasibleBidError(SiteBidError):
    """This error is raised when no bid plan satisfies the constraints."""


class UnknownRpcModelError(SiteBidError):
    """This error is raised when there's a try to access an unknown RPC model type."""


class UnknownBidderError(SiteBidError):
    """This error is raised when there's a try to access an unknown bidder."""
