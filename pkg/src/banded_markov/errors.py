"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`BandedMarkovError`; the CLI maps these to exit code 2.
"""


class BandedMarkovError(Exception):
    """Base class for all package errors."""

    def __init__(self, message="", **context):
        super().__init__(message)
        self.context = context

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), "context": self.context}


class SpecFormatError(BandedMarkovError):
    pass


class NonPositiveInBandEntry(BandedMarkovError):
    pass


class RowSumViolation(BandedMarkovError):
    pass


class SizeExceeded(BandedMarkovError):
    pass


class DimensionMismatch(BandedMarkovError):
    pass


class PbfDoesNotExist(BandedMarkovError):
    pass


class DepthTooSmall(BandedMarkovError):
    pass


class NotRawForm(BandedMarkovError):
    pass


class ResidualNotIdentity(BandedMarkovError):
    pass


class ZeroExtremeDiagonal(BandedMarkovError):
    pass


class IndexOutOfTable(BandedMarkovError):
    pass


class NotSimpleSpectrum(BandedMarkovError):
    pass


class ComplexEigenvalue(BandedMarkovError):
    pass


class NonPositivePerronVector(BandedMarkovError):
    pass


class BiorthogonalityFailure(BandedMarkovError):
    pass


class SingularInitialConditions(BandedMarkovError):
    pass


class MassBoundViolation(BandedMarkovError):
    pass


class StateOutOfRange(BandedMarkovError):
    pass


class SOutOfRange(BandedMarkovError):
    pass


class ClassificationMismatch(BandedMarkovError):
    pass


class InsufficientTruncations(BandedMarkovError):
    pass


class NotStochastic(BandedMarkovError):
    pass


class InsufficientSamples(UserWarning):
    """Warning: too few Monte Carlo samples for reliable estimates."""
