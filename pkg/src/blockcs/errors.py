"""Exception hierarchy shared across the toolkit.

The CLI maps these onto stable exit codes (see cli.main).
"""


class BlockCsError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(BlockCsError):
    """Array shapes or channel counts do not match an operation's contract."""


class GeometryError(BlockCsError):
    """Spatial sizes incompatible with a stride/window/block geometry."""


class ConfigError(BlockCsError):
    """A configuration value is out of range or inconsistent."""


class FormatError(BlockCsError):
    """A file does not conform to its declared on-disk format."""


class NumericalError(BlockCsError):
    """A linear-algebra step failed (rank deficiency, divergence)."""
