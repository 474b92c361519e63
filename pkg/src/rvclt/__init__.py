"""Simulation toolkit for Gaussian central limit theorems of dependent
sequences with tail index 2 and infinite variance."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BracketError,
    ConfigurationError,
    DomainError,
    RvcltError,
    SamplingError,
    StageError,
)
