# src/runner/output_formatter.py
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from src.shared.reports import TheoremReport, reports_frame
from src.shared.run_logger import now_utc_iso


@dataclass
class ExperimentOutcome:
    name: str
    kind: str
    reports: List[TheoremReport] = field(default_factory=list)
    sweeps: List[Dict[str, Any]] = field(default_factory=list)
    equilibria: List[Dict[str, Any]] = field(default_factory=list)
    tables: List[str] = field(default_factory=list)
    failure: Optional[str] = None
    error_kind: Optional[str] = None  # "config" | "solver"

    @property
    def passed(self) -> bool:
        return self.failure is None and all(r.passed for r in self.reports)


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become strings so the output stays strict JSON."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        x = float(value)
        return x if math.isfinite(x) else str(x)
    if isinstance(value, Path):
        return str(value)
    return value


class OutputFormatter:
    """
    Writes one scenario's artifacts under output_dir:
      results.json   sweeps, equilibria and reports (no timestamps)
      reports.csv    one row per report
      tables/*.csv   per-experiment tables
      manifest.json  hashes, epsilon, grid spacing, file list (written last)
    """

    def __init__(self, output_dir: str | Path) -> None:
        self.output_dir = Path(output_dir)
        self.tables_dir = self.output_dir / "tables"
        self.tables_dir.mkdir(parents=True, exist_ok=True)

    # ------------------------------------------------------------------
    # PUBLIC API
    # ------------------------------------------------------------------

    def write_table(self, name: str, frame: pd.DataFrame) -> str:
        path = self.tables_dir / f"{name}.csv"
        frame.to_csv(path, index=False, float_format="%.17g")
        return str(path.relative_to(self.output_dir))

    def format_results(
        self,
        scenario: str,
        config_hash: str,
        kernel: Dict[str, Any],
        grid_spacing: Optional[float],
        outcomes: List[ExperimentOutcome],
    ) -> Dict[str, Any]:
        return to_jsonable(
            {
                "scenario": scenario,
                "config_hash": config_hash,
                "kernel": kernel,
                "grid_spacing": grid_spacing,
                "experiments": [
                    {"name": o.name, "kind": o.kind, "pass": o.passed, "failure": o.failure} for o in outcomes
                ],
                "sweeps": [s for o in outcomes for s in o.sweeps],
                "equilibria": [e for o in outcomes for e in o.equilibria],
                "reports": [r.to_dict() for o in outcomes for r in o.reports],
            }
        )

    def write_results(self, results: Dict[str, Any]) -> str:
        """Write results.json; returns its sha256."""
        text = json.dumps(results, indent=2, sort_keys=True, ensure_ascii=False)
        path = self.output_dir / "results.json"
        path.write_text(text + "\n", encoding="utf-8")
        return hashlib.sha256((text + "\n").encode("utf-8")).hexdigest()

    def write_reports_csv(self, outcomes: List[ExperimentOutcome]) -> str:
        frame = reports_frame([r for o in outcomes for r in o.reports])
        path = self.output_dir / "reports.csv"
        frame.to_csv(path, index=False, float_format="%.17g")
        return str(path.relative_to(self.output_dir))

    def write_manifest(
        self,
        scenario: str,
        config_hash: str,
        results_sha256: str,
        epsilon: float,
        grid_spacing: Optional[float],
        tables: List[str],
        exit_code: int,
        extra: Optional[Dict[str, Any]] = None,
    ) -> Path:
        payload = {
            "scenario": scenario,
            "config_hash": config_hash,
            "results_sha256": results_sha256,
            "epsilon": epsilon,
            "grid_spacing": grid_spacing,
            "tables": sorted(tables),
            "exit_code": exit_code,
            "timestamp_utc": now_utc_iso(),
        }
        payload.update(extra or {})
        path = self.output_dir / "manifest.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True), encoding="utf-8")
        tmp.replace(path)
        return path
