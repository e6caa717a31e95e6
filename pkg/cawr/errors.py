# SPDX-License-Identifier: MIT
"""Exception hierarchy shared by every cawr module."""
from typing import Any, Dict, List, Optional


class CawrError(Exception):
    """Base exception for cawr errors."""
    pass


class ConfigurationError(CawrError, ValueError):
    """Raised when a parameter or configuration value is out of range."""
    pass


class DataValidationError(CawrError, ValueError):
    """Raised for malformed data, shape mismatches and empty batches."""
    pass


class StaleTapeError(CawrError):
    """Raised when backward is called with a tape from older parameters."""
    pass


class TrainingAbortedError(CawrError):
    """Raised when a training run produces a non-finite value."""

    def __init__(
        self,
        message: str,
        iteration: int,
        partial_metrics: Optional[List[Dict[str, Any]]] = None,
    ):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
        self.diagnostic = message
        self.partial_metrics = partial_metrics or []
