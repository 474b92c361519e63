"""Exception types raised across the package."""


class RvcltError(Exception):
    """Base class for all package errors."""


class DomainError(RvcltError, ValueError):
    """Argument outside the domain of a closed-form function."""


class ConfigurationError(RvcltError, ValueError):
    """Invalid model, tail or experiment parameters."""


class SamplingError(RvcltError, RuntimeError):
    """A sampler exceeded its declared safeguard."""


class BracketError(RvcltError, RuntimeError):
    """Root bracket could not be established."""


class StageError(RvcltError, RuntimeError):
    """Failure inside a named experiment stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
