class ExportError(Exception):
    """Base class for everything this package raises on purpose."""
