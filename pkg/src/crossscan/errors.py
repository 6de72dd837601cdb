"""Exception types shared across the package."""


class CrossScanError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CrossScanError):
    """Invalid configuration file or option set (CLI exit code 2)."""


class ShapeError(CrossScanError, ValueError):
    """Array dimensions do not match what an operation requires."""


class UnsupportedFieldError(CrossScanError, KeyError):
    """Requested B0 field strength is not in the relaxation table."""


class InsufficientTissueError(CrossScanError, ValueError):
    """A tissue has fewer valid patch centers than were requested."""


class LabelMismatchError(CrossScanError, ValueError):
    """A manual patch center's declared tissue disagrees with the label map."""


class CorruptModelError(CrossScanError):
    """Model file is truncated or inconsistent with its manifest."""


class DegenerateLabelsError(CrossScanError, ValueError):
    """Classifier training data contains fewer than two classes."""


class NumericError(CrossScanError):
    """Non-finite value encountered during training (CLI exit code 3)."""
