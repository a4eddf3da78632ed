"""
Custom exceptions for the POD KD pipeline.
"""

from typing import Any


class PipelineError(Exception):
    """Base exception for all pipeline errors."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


# Configuration Errors
class ConfigurationError(PipelineError):
    """Raised when configuration is invalid."""

    pass


class ConfigValidationError(ConfigurationError):
    """Raised when an experiment config fails validation.

    ``details`` carries ``key`` (dotted path) and ``line`` when known.
    """

    pass


# Validation Errors
class ValidationError(PipelineError):
    """Raised when validation fails."""

    pass


class InvalidInputError(ValidationError):
    """Raised when input is invalid."""

    pass


class InvalidVolumeError(ValidationError):
    """Raised when a volume violates its invariants or an operation's precondition."""

    pass


class InvalidClipError(ValidationError):
    """Raised when a video clip violates its invariants."""

    pass


class InvalidProbabilityError(ValidationError):
    """Raised when a vector is not on the probability simplex."""

    pass


class ShapeMismatchError(ValidationError):
    """Raised when tensor shapes disagree with a model config."""

    pass


# Data Errors
class DataError(PipelineError):
    """Raised when dataset handling fails."""

    pass


class UnsupportedFileFormatError(DataError):
    """Raised when file format is not supported."""

    pass


class DatasetParsingError(DataError):
    """Raised when a volume or clip file cannot be read."""

    pass


class ManifestError(DataError):
    """Raised when a dataset manifest is malformed."""

    pass


class MissingLabelPoolError(DataError):
    """Raised when the clip pool lacks a label needed for pairing."""

    pass


class SingleClassError(DataError):
    """Raised when a labeled set holds only one class."""

    pass


# Checkpoint Errors
class CheckpointError(PipelineError):
    """Raised when checkpoint handling fails."""

    pass


class CheckpointNotFoundError(CheckpointError):
    """Raised when a required checkpoint does not exist."""

    pass


class StageMismatchError(CheckpointError):
    """Raised when a checkpoint belongs to the wrong stage."""

    pass


class ConfigMismatchError(CheckpointError):
    """Raised when a checkpoint was built with an incompatible model config."""

    pass


class StaleArtifactError(CheckpointError):
    """Raised when an upstream artifact hash differs from the current config."""

    pass


# Training Errors
class TrainingError(PipelineError):
    """Raised when a training stage fails."""

    pass


class TrainingDivergedError(TrainingError):
    """Raised when a loss becomes non-finite."""

    pass


class FrozenModelError(TrainingError):
    """Raised when an optimizer is asked to update frozen parameters."""

    pass


class FreezeViolationError(TrainingError):
    """Raised when frozen teacher weights changed during distillation."""

    pass


# Evaluation Errors
class EvaluationError(PipelineError):
    """Raised when evaluation cannot be computed."""

    pass
