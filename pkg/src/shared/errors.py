# src/shared/errors.py
from __future__ import annotations

from typing import Any, Dict, Optional, Sequence

import numpy as np


class PotentiaError(Exception):
    """Base class for every error raised by the library."""


class ValidationError(PotentiaError, ValueError):
    """Bad input: negative weights, dimension mismatch, broken nesting, ..."""


class KernelError(PotentiaError, ValueError):
    """A kernel table would contain an infinite entry (epsilon = 0 on a shared point)."""

    def __init__(self, message: str, row: Optional[int] = None, col: Optional[int] = None) -> None:
        super().__init__(message)
        self.row = row
        self.col = col


class FactorizationError(PotentiaError, ArithmeticError):
    """Cholesky failed for every rung of the jitter ladder."""

    def __init__(self, message: str, smallest_pivot: float, ladder: Sequence[float]) -> None:
        super().__init__(message)
        self.smallest_pivot = float(smallest_pivot)
        self.ladder = tuple(float(x) for x in ladder)


class NumericalConsistencyError(PotentiaError, ArithmeticError):
    """An energy radicand came out negative beyond the rounding guard."""


class NonConvergenceError(PotentiaError, RuntimeError):
    """
    Active-set solve ran out of iterations or revisited a working set.

    Carries the best iterate seen so callers can still inspect it.
    """

    def __init__(
        self,
        message: str,
        best_weights: Optional[np.ndarray] = None,
        residuals: Optional[Dict[str, float]] = None,
        iterations: int = 0,
    ) -> None:
        super().__init__(message)
        self.best_weights = best_weights
        self.residuals = dict(residuals or {})
        self.iterations = int(iterations)


class ConfigError(PotentiaError):
    """Scenario file could not be parsed or failed schema validation."""

    def __init__(self, message: str, line: Optional[int] = None, path: str = "") -> None:
        super().__init__(message)
        self.line = line
        self.path = path

    def to_dict(self) -> Dict[str, Any]:
        return {"message": str(self), "line": self.line, "path": self.path}
