"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class HawkesNeuroError(Exception):
    exit_code = 1


class ConfigError(HawkesNeuroError, ValueError):
    exit_code = 2


class DataError(HawkesNeuroError, ValueError):
    exit_code = 3


class NumericalError(HawkesNeuroError, RuntimeError):
    exit_code = 4
