"""Exception hierarchy shared by every module."""


class InlsError(Exception):
    """Base class for all errors raised by inlslab."""


class OutOfRange(InlsError, ValueError):
    """Parameter b outside the supported regime 0 <= b < 1/2."""


class InfeasibleTheta(InlsError, ValueError):
    pass


class EmptyRange(InlsError, ValueError):
    pass


class NoConvergence(InlsError, RuntimeError):
    pass


class NegativeValues(InlsError, RuntimeError):
    pass


class BracketFailure(InlsError, RuntimeError):
    pass


class SupportOverflow(InlsError, ValueError):
    pass


class HypothesisViolated(InlsError, ValueError):
    pass


class WeightOverflowsGrid(InlsError, ValueError):
    pass


class StrideTooCoarse(InlsError, ValueError):
    pass


class NotConverged(InlsError, RuntimeError):
    """Duhamel tail too large: T too short or data does not scatter."""
