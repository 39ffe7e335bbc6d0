"""Exception types raised across the package."""


class CfschedError(Exception):
    """Base class for all package errors."""


class InvalidParams(CfschedError, ValueError):
    pass


class MalformedFile(CfschedError, ValueError):
    pass


class DimensionMismatch(CfschedError, ValueError):
    pass


class TooLarge(CfschedError, ValueError):
    """An exhaustive routine was asked to enumerate past its guard."""


class Uncovered(CfschedError, LookupError):
    """No partition in the family covers the pattern (the t = infinity case)."""

    def __init__(self, pattern):
        super().__init__(f"pattern {tuple(pattern)} is not covered by any partition")
        self.pattern = tuple(pattern)


class UserNotListed(CfschedError, LookupError):
    pass


class NotPowerOfTwo(CfschedError, ValueError):
    pass


class EmptyDistribution(CfschedError, ValueError):
    pass


class InvalidEpsilon(CfschedError, ValueError):
    pass


class DomainError(CfschedError, ValueError):
    """A bound was evaluated outside the regime where its formula is defined."""


class BuildFailed(CfschedError, RuntimeError):
    pass


class BuildExhausted(CfschedError, RuntimeError):
    """A hash bucket needed a displacement above the configured maximum."""


class EmptyExperiment(CfschedError, ValueError):
    pass
