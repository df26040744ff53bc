"""Exception hierarchy shared by the parsers and the verification engine."""


class FreshSIPError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(FreshSIPError, ValueError):
    """Raised when an input document cannot be parsed.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending line, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedHeader(ParseError):
    pass


class NumericParse(ParseError):
    pass


class DimensionMismatch(FreshSIPError, ValueError):
    """Shapes disagree, either in a parsed file or in an in-memory operation."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnboundedInput(ParseError):
    pass


class EmptyObjective(ParseError):
    pass


class ModeMismatch(ParseError):
    pass


class AllDegenerate(FreshSIPError, ValueError):
    pass


class ZeroWidth(FreshSIPError, ValueError):
    pass


class BudgetExceeded(FreshSIPError, RuntimeError):
    pass
