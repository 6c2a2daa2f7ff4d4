"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors 2,
numerical failures 3.
"""


class PrinteridError(Exception):
    """Base class for all package errors."""


class InputShapeError(PrinteridError):
    """Array arguments have inconsistent or unsupported shapes."""


class DegenerateImageError(PrinteridError):
    """Image has no usable intensity structure (e.g. constant page)."""


class InsufficientDataError(PrinteridError):
    """Not enough documents/patches to honor the requested split."""


class EmptyDocumentError(PrinteridError):
    """A page-level operation received zero letter predictions."""


class DegenerateBatchError(PrinteridError):
    """Batch statistics are undefined (train-mode batch of 1)."""


class DegenerateProjectionError(PrinteridError):
    """Camera tilt produces a non-invertible page projection."""


class PageSpecError(PrinteridError):
    """Page specification cannot be rendered."""


class PoisonedGradientError(PrinteridError):
    """Non-finite gradient reached the optimizer; the step was aborted."""


class PoisonedTrainingError(PrinteridError):
    """Training loss became non-finite; carries the partial run record."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class FileFormatError(PrinteridError):
    """A binary container (patch cache / model file) failed validation."""
