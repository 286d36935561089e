"""Exception hierarchy shared across flowforge."""


class FlowForgeError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(FlowForgeError, ValueError):
    """Raster shapes are empty, degenerate or disagree with each other."""


class DomainError(FlowForgeError, ValueError):
    """A scalar argument lies outside its admissible range."""


class IndexingMismatchError(FlowForgeError, ValueError):
    """Two flow fields use different indexing conventions."""


class UndefinedMetricError(FlowForgeError, ValueError):
    """A metric was requested over an empty set of pixels."""


class FormatError(FlowForgeError):
    """Base class for file parsing failures."""


class MagicError(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(FormatError):
    """File ended before the declared payload."""


class HeaderError(FormatError):
    """Header fields are malformed or declare impossible dimensions."""


class BitDepthError(FormatError):
    """Image does not have the bit depth / channel layout the format requires."""


class RangeOverflowError(FormatError):
    """Values fall outside the representable range of the target format."""


class UnknownFormatError(FormatError):
    """Could not determine a file format from its extension or magic bytes."""


class MissingMemberError(FormatError):
    """A required file of a triplet directory is absent."""


class ConfigError(FlowForgeError, ValueError):
    """A configuration key is unknown or carries an invalid value."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
