"""Exception hierarchy.

Two broad families: validation errors (bad inputs or inconsistent
configuration, CLI exit code 2) and numerical errors (well-formed inputs on
which the computation cannot proceed, CLI exit code 3).
"""


class FencekitError(Exception):
    """Base class for all package errors."""


class ValidationError(FencekitError, ValueError):
    """Malformed or mutually inconsistent inputs."""


class NumericalError(FencekitError, ArithmeticError):
    """A numerically degenerate or failed computation."""


# -- validation ------------------------------------------------------------

class DimensionMismatch(ValidationError):
    pass


class RankDeficient(NumericalError):
    pass


class DegreesOfFreedomTooSmall(ValidationError):
    pass


class OrderOutOfRange(ValidationError):
    pass


class TooManyCandidates(ValidationError):
    pass


class MissingSamplingVariances(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class NotFullModelReference(ValidationError):
    pass


class EmptySpace(ValidationError):
    pass


class MissingFit(ValidationError):
    pass


class UnsupportedRandomStructure(ValidationError):
    pass


class UnsupportedFamily(ValidationError):
    pass


class MalformedHeader(ValidationError):
    pass


class NonNumericCell(ValidationError):
    pass


class InconsistentNesting(ValidationError):
    pass


# -- numerical -------------------------------------------------------------

class DegenerateResidual(NumericalError):
    pass


class NonPositiveDefinite(NumericalError):
    pass


class OptimizerFailure(NumericalError):
    pass


class ZeroSigma(NumericalError):
    pass


class NoInteriorPeak(NumericalError):
    pass


class IoFailure(FencekitError, OSError):
    pass
