"""Exception hierarchy shared by all modules."""


class GridFreqError(Exception):
    """Base class for every error raised by this package."""


class ParseError(GridFreqError):
    pass


class ValidationError(GridFreqError):
    pass


class ConfigError(GridFreqError):
    pass


class SingularBlockError(GridFreqError):
    pass


class DegenerateModeError(GridFreqError):
    pass


class DegenerateError(GridFreqError):
    pass


class NumericalError(GridFreqError):
    pass


class InfeasibleError(GridFreqError):
    pass


class NotSettledError(GridFreqError):
    pass


class DivergenceError(GridFreqError):
    pass
