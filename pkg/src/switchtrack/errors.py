"""Exception hierarchy.

Every error raised by the library derives from :class:`SwitchTrackError`. The three
intermediate classes map onto the CLI exit codes (config 2, data 3, numerical 4).
"""


class SwitchTrackError(Exception):
    exit_code = 1


class ConfigError(SwitchTrackError, ValueError):
    exit_code = 2


class DataError(SwitchTrackError, ValueError):
    exit_code = 3


class NumericalError(SwitchTrackError, ArithmeticError):
    exit_code = 4


class InvalidInputError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ZeroSusceptibilityError(DataError):
    def __init__(self, node):
        super().__init__(f"node {node} has an all-zero susceptibility row")
        self.node = node


class ResourceGuardError(DataError):
    pass


class UndefinedMetricError(DataError):
    pass


class SingularModelError(NumericalError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class RankDeficiencyError(NumericalError):
    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class DegenerateIntervalError(NumericalError):
    pass


class IdentifiabilityViolationError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass
