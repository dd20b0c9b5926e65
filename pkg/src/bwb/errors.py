"""Exception hierarchy shared by all ``bwb`` modules."""


class BWError(Exception):
    """Base class for every error raised by this package."""


class DomainError(BWError, ValueError):
    """Input lies outside the domain of an operation (indefinite, singular, empty)."""


class ShapeError(BWError, ValueError):
    """Dimensions of the inputs do not agree."""


class RankError(BWError, ValueError):
    """Spectral functional undefined because the operator rank is too small."""


class WeightError(BWError, ValueError):
    """Sample weights are negative or sum to zero."""


class ConfigError(BWError, ValueError):
    """Invalid configuration value."""


class DegenerateResampleError(BWError, RuntimeError):
    """Bootstrap could not find enough non-degenerate weight draws."""


class DatasetIOError(BWError, OSError):
    """Dataset or matrix file could not be read or failed validation."""


class ChecksumError(DatasetIOError):
    pass


class ParseError(DatasetIOError):
    pass


class ManifestError(DatasetIOError):
    """Manifest is missing, malformed or inconsistent with the files on disk."""
