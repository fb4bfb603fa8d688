"""Exception taxonomy shared by every module.

The CLI maps these onto exit codes (config 2, data/format 3, protocol 4),
so raising the right class matters more than the message text.
"""


class MlffError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(MlffError):
    """Invalid configuration: bad shapes, bad hyperparameters, unknown keys."""


class DataError(MlffError):
    """Invalid data content: labels out of range, dimension mismatches."""


class NumericError(DataError):
    """Non-finite values encountered at a layer or container boundary."""


class FormatError(DataError):
    """A file is not a valid container (bad magic, version, record kind)."""


class CorruptionError(DataError):
    """A container is structurally valid but truncated or inconsistent."""


class ProtocolError(MlffError):
    """An operation was invoked in a state its contract forbids."""
