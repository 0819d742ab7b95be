"""Boundary adapter: pretrained models in, patch-embedding files out."""

from .export import ExportResult, export
from .layout import Layout, from_dict, load
from .plugins import IdentityExtractor, identity, load_plugin

__version__ = "0.1.0"

__all__ = [
    "ExportResult",
    "IdentityExtractor",
    "Layout",
    "export",
    "from_dict",
    "identity",
    "load",
    "load_plugin",
    "__version__",
]
