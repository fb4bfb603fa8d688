"""Multi-level embedding extraction from frozen pretrained vision backbones."""

__version__ = "0.1.0"

from .errors import ConfigurationError, DataError, ExtractError
from .pooling import pool_spatial, pool_vit
from .backbones import BACKBONES, backbone_info
from .extract import ExtractionSpec, extract

__all__ = [
    "ExtractError",
    "ConfigurationError",
    "DataError",
    "pool_spatial",
    "pool_vit",
    "BACKBONES",
    "backbone_info",
    "ExtractionSpec",
    "extract",
]
