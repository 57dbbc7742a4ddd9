"""Exception hierarchy; the CLI maps each class to an exit code."""


class StorageDPError(Exception):
    exit_code = 3


class ConfigError(StorageDPError, ValueError):
    """Invalid parameters, grid settings or command options."""

    exit_code = 1


class DomainError(StorageDPError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 1


class DataError(StorageDPError, ValueError):
    """Malformed or missing input data."""

    exit_code = 2


class InvariantError(StorageDPError, RuntimeError):
    """An internal invariant was violated."""

    exit_code = 3


class GuardError(ConfigError):
    """An oracle instance exceeds its size guards."""
