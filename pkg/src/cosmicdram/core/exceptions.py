class CosmicDramException(Exception):
    """
    Base class for all the exceptions generated by cosmicdram.
    """


class ParsingError(CosmicDramException):
    """
    Exception raised when an input file does not follow its schema.

    The line number (1-based, counting header and comment lines) and the
    reason are kept as attributes so that callers can report them.
    """

    def __init__(self, lineno: int | None, reason: str):
        self.lineno = lineno
        self.reason = reason
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(f"{where}{reason}")


class MalformedRowError(ParsingError):
    """
    Exception raised when a row cannot be converted to a valid object.
    """


class NonMonotonicTimestampError(ParsingError):
    """
    Exception raised when the timestamps of a time series are not strictly
    increasing.
    """

    def __init__(self, lineno: int | None, reason: str = "timestamp not increasing"):
        super().__init__(lineno, reason)


class DuplicateDimmError(ParsingError):
    """
    Exception raised when a DIMM id appears more than once in an inventory.
    """


class InconsistentContainmentError(ParsingError):
    """
    Exception raised when a node belongs to two racks or a socket to two nodes.
    """


class LengthMismatchError(CosmicDramException):
    """
    Exception raised when paired samples do not have the same length.
    """


class EmptySampleError(CosmicDramException):
    """
    Exception raised when a statistic is requested on an empty sample.
    """


class InvalidPValueError(CosmicDramException):
    """
    Exception raised when a p-value is not a number in [0, 1].
    """


class InvalidSpecError(CosmicDramException):
    """
    Exception raised when a test specification uses a filter that is not
    legal for its error class.
    """


class DegenerateLabelsError(CosmicDramException):
    """
    Exception raised when a metric is undefined because the labels contain a
    single class.
    """


class ConfigurationError(CosmicDramException):
    """
    Exception raised when a configuration holds invalid values.
    """


class InvariantViolationError(CosmicDramException):
    """
    Exception raised when an internal invariant of the toolkit is broken.
    """
