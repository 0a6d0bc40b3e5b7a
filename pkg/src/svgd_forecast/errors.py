"""Exception hierarchy shared by the library and the CLI."""


class ForecastError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(ForecastError, ValueError):
    exit_code = 2


class DataError(ForecastError, ValueError):
    exit_code = 3


class NumericError(ForecastError, FloatingPointError):
    exit_code = 4


class ContractError(ForecastError, ValueError):
    """Shapes or layouts passed between components do not agree."""

    exit_code = 2
