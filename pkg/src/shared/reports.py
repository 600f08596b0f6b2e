# src/shared/reports.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd


@dataclass(frozen=True)
class TheoremReport:
    """
    Outcome of one numerical property check.

    passed holds exactly when worst_residual <= tolerance; details carries
    one row per probe, chain element or sample.
    """
    theorem_id: str
    passed: bool
    worst_residual: float
    tolerance: float
    details: List[Dict[str, Any]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    label: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theorem_id": self.theorem_id,
            "label": self.label,
            "pass": self.passed,
            "worst_residual": _finite_or_str(self.worst_residual),
            "tolerance": self.tolerance,
            "details": [dict(row) for row in self.details],
            "notes": list(self.notes),
        }

    def to_row(self) -> Dict[str, Any]:
        return {
            "theorem_id": self.theorem_id,
            "label": self.label,
            "pass": self.passed,
            "worst_residual": self.worst_residual,
            "tolerance": self.tolerance,
        }

    def details_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.details)


def make_report(
    theorem_id: str,
    worst_residual: float,
    tolerance: float,
    details: Optional[List[Dict[str, Any]]] = None,
    notes: Optional[List[str]] = None,
    label: str = "",
) -> TheoremReport:
    worst = float(worst_residual)
    passed = math.isfinite(worst) and worst <= float(tolerance)
    return TheoremReport(
        theorem_id=theorem_id,
        passed=passed,
        worst_residual=worst,
        tolerance=float(tolerance),
        details=list(details or []),
        notes=list(notes or []),
        label=label,
    )


def failed_report(theorem_id: str, tolerance: float, reason: str, label: str = "") -> TheoremReport:
    """A report that cannot pass (the check itself could not run)."""
    return TheoremReport(
        theorem_id=theorem_id,
        passed=False,
        worst_residual=math.inf,
        tolerance=float(tolerance),
        notes=[reason],
        label=label,
    )


def reports_frame(reports: List[TheoremReport]) -> pd.DataFrame:
    columns = ["theorem_id", "label", "pass", "worst_residual", "tolerance"]
    return pd.DataFrame([r.to_row() for r in reports], columns=columns)


def _finite_or_str(x: float) -> Any:
    return x if math.isfinite(x) else str(x)
