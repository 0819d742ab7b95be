class ExportError(Exception):
    """Base class for exporter failures."""


class LayoutJsonError(ExportError):
    """The layout JSON file is malformed or inconsistent."""


class ImageError(ExportError):
    """An input image cannot be read or has the wrong geometry."""


class PluginError(ExportError):
    """The extractor plugin cannot be loaded or violates its contract."""
