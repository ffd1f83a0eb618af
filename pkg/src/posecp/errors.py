"""Exception types shared across the package."""


class PoseCPError(Exception):
    """Base class for errors raised by posecp."""


class ValidationError(PoseCPError, ValueError):
    """An input violated a documented invariant or precondition."""


class ParseError(ValidationError):
    """A data file line could not be parsed.

    ``line`` is the 1-based line number when known.
    """

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)
