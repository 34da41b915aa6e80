"""Exception hierarchy. Each family maps to one CLI exit code."""


class EdslError(Exception):
    exit_code = 1


class ConfigError(EdslError):
    exit_code = 2


class DimensionError(EdslError, ValueError):
    exit_code = 2


class DataError(EdslError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UndefinedMetricError(DataError):
    pass


class NumericFailure(EdslError):
    """Raised when a solve hits a non-finite objective.

    ``last_iterate`` holds the most recent finite iterate.
    """
    exit_code = 4

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class TransportError(EdslError):
    exit_code = 5


class RoundFailure(TransportError):
    def __init__(self, round_, missing):
        self.round = round_
        self.missing = sorted(missing)
        super().__init__(f"round {round_}: no gradient from machines {self.missing}")
