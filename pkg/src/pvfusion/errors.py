"""Exception types shared across the package."""


class PvfusionError(Exception):
    """Base class for all package errors."""


class InvalidRangeError(PvfusionError, ValueError):
    """A numeric parameter violates its documented range."""


class BehindCameraError(PvfusionError, ValueError):
    """Attempted to project a point with non-positive camera-frame depth."""


class DimensionMismatchError(PvfusionError, ValueError):
    """Two containers that must share dimensions or binning do not."""


class FileFormatError(PvfusionError, ValueError):
    """A binary file failed validation (magic, size, values, normalization)."""


class EmptyValidSetError(PvfusionError, ValueError):
    """An evaluation was requested over zero valid pixels."""


class EmptyAssociationError(PvfusionError, ValueError):
    """No frame in a sequence could be associated with a pose."""


class NonFiniteCostError(PvfusionError, ValueError):
    """The solver encountered a non-finite cost; message names the pixel."""
