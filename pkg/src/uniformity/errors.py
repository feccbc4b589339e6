"""Exception hierarchy shared by every module in the package."""


class UniformityError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDistribution(UniformityError, ValueError):
    pass


class NegativeMass(InvalidDistribution):
    pass


class MassNotOne(InvalidDistribution):
    pass


class DuplicateLabel(InvalidDistribution):
    pass


class InvalidSMax(UniformityError, ValueError):
    pass


class HypothesisOutOfRange(UniformityError, ValueError):
    pass


class EpsOutOfRange(UniformityError, ValueError):
    pass


class BadFamilyParams(UniformityError, ValueError):
    pass


class CapacityExceeded(UniformityError):
    pass


class StreamExhausted(UniformityError):
    """Raised by a stream oracle when a pull is attempted past the end."""


class SamplingFailure(UniformityError):
    """A sampling procedure stopped before reaching its stopping rule.

    ``diagnostics`` holds the partial state (samples consumed, collision
    counts, stage) at the moment of failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class BudgetExceeded(SamplingFailure):
    pass


class InsufficientSamples(SamplingFailure):
    """The sample stream ended before the procedure could finish."""


class TailDiverges(UniformityError):
    pass


class NoPassingK(UniformityError):
    pass


class DegenerateFit(UniformityError, ValueError):
    pass
