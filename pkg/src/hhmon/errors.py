"""Error taxonomy shared by the library and the CLI exit codes."""


class HhmonError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(HhmonError):
    """Bad configuration or command usage (CLI exit code 2)."""

    exit_code = 2


class DataError(HhmonError):
    """Malformed or missing on-disk data (CLI exit code 3)."""

    exit_code = 3


class ModelError(HhmonError):
    """Network/checkpoint problems, including non-finite losses (CLI exit code 4)."""

    exit_code = 4
