"""Exception types raised across the package."""


class SsvepError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SsvepError, ValueError):
    """An argument violates a documented precondition."""


class UnsupportedRatioError(SsvepError, ValueError):
    """Resampling ratio cannot be expressed as a small rational fraction."""


class ChannelNotFoundError(SsvepError, KeyError):
    """A referenced channel label is absent from the montage."""


class InsufficientDataError(SsvepError, ValueError):
    """A recording is too short to cover the requested epoch window."""


class InvalidBandError(SsvepError, ValueError):
    """A filter-bank band edge is out of the representable range."""


class IncompleteCalibrationError(SsvepError, ValueError):
    """Calibration data is missing one or more stimuli."""


class IncompatibleDomainError(SsvepError, ValueError):
    """Source and target datasets do not cover the same stimulus set."""


class MontageMismatchError(SsvepError, ValueError):
    """Datasets with different montages were pooled without transformation."""


class DegenerateTestError(SsvepError, ValueError):
    """A statistical test has no usable samples (e.g. all differences zero)."""


class UndefinedNormalizationError(SsvepError, ValueError):
    """Normalization is undefined (e.g. spectrum of an all-zero signal)."""


class FormatError(SsvepError, ValueError):
    """A container file is malformed."""


class UnsupportedVersionError(FormatError):
    """A container file declares an unknown format version."""


class TruncatedPayloadError(FormatError):
    """A container payload is shorter than its header declares."""


class InvalidModelError(SsvepError, ValueError):
    """A model is structurally unusable (e.g. no templates)."""


class ConfigError(SsvepError, ValueError):
    """A run configuration failed validation."""
