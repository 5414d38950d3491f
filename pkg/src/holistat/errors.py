"""Exception types shared across the pipeline."""


class HolistatError(Exception):
    """Base class for all errors raised by holistat."""


class InvalidInput(HolistatError, ValueError):
    """An argument violates an operation's preconditions."""


class DegenerateInput(HolistatError, ValueError):
    """Input is well-formed but carries no usable variation (constant, zero scale)."""


class EmptySeries(DegenerateInput):
    """A series has no present samples left."""


class TraceFormatError(HolistatError):
    """A trace file could not be parsed.

    Carries the file name and, when known, the 1-based line and column.
    """

    def __init__(self, message, path=None, line=None, column=None):
        super().__init__(message)
        self.message = message
        self.path = None if path is None else str(path)
        self.line = line
        self.column = column

    def __str__(self):
        loc = self.path or "<input>"
        if self.line is not None:
            loc += f":{self.line}"
            if self.column is not None:
                loc += f":{self.column}"
        return f"{loc}: {self.message}"

    def to_dict(self):
        return {
            "error": "TraceFormatError",
            "message": self.message,
            "file": self.path,
            "line": self.line,
            "column": self.column,
        }
