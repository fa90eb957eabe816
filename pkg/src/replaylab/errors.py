"""Exception types shared across the package."""


class ReplayLabError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ReplayLabError):
    """Structural misuse: bad shapes, unknown keys, invalid hyperparameters."""


class DataError(ReplayLabError):
    """Invalid runtime input: out-of-range labels, empty or impossible datasets."""


class NumericError(ReplayLabError):
    """Non-finite values encountered during training or evaluation."""


class ParseError(ReplayLabError):
    """A config or CSV file could not be parsed.

    Carries the 1-based line (and column, when known) of the offending text.
    """

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column
