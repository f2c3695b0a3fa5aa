"""Exception hierarchy.

Every error raised by the package derives from :class:`WildbandError`. The
three intermediate classes map onto CLI exit codes: usage problems (1), bad
input data (2) and numerical failures (3).
"""


class WildbandError(Exception):
    exit_code = 3


class UsageError(WildbandError):
    exit_code = 1


class DataError(WildbandError):
    exit_code = 2


class NumericalError(WildbandError):
    exit_code = 3


# data validation
class EmptyData(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class InvalidInterval(DataError):
    pass


class OverlappingIntervals(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    pass


class IoError(DataError):
    """A file could not be read or written."""


# estimation
class EmptyRiskSetAtEvent(NumericalError):
    pass


class SingularInformation(NumericalError):
    pass


class MonotoneLikelihood(NumericalError):
    """The partial likelihood keeps increasing as ``|beta| -> inf``."""


class NoConvergence(NumericalError):
    pass


class SingularBootInformation(NumericalError):
    pass


class AllReplicatesFailed(NumericalError):
    pass


# bands
class ZeroVarianceOnGrid(NumericalError):
    pass


class ZeroEstimateOnGrid(NumericalError):
    pass


class TooFewReplicates(NumericalError):
    pass
