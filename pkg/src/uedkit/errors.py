"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation problems exit 2, file/format
problems exit 3, training failures exit 4.
"""


class UedError(Exception):
    """Base class for all package errors."""


class ValidationError(UedError):
    """Invalid argument, shape, or precondition violation."""


class DimensionError(ValidationError):
    """Incompatible array dimensions."""


class DegenerateInputError(ValidationError):
    """Input is structurally valid but mathematically degenerate (e.g. all-zero trace)."""


class UndefinedMetricError(ValidationError):
    """Metric is undefined for the given inputs (e.g. ROC-AUC with one class)."""


class DataFormatError(UedError):
    """Corrupt, truncated, or otherwise malformed dataset/checkpoint file."""


class TrainingError(UedError):
    """Non-finite loss/gradients or unrecoverable state during training.

    `batch_index` identifies the minibatch at which the failure occurred,
    when known.
    """

    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index


class ScoringError(UedError):
    """Detector cannot score a sample (e.g. empty per-cluster distance table)."""
