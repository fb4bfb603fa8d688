class ExtractError(Exception):
    """Base class for extractor errors."""


class ConfigurationError(ExtractError):
    """Bad spec: unknown backbone, stage not found, invalid parameters."""


class DataError(ExtractError):
    """Bad data: unreadable image, dimension drift, empty feature map."""
