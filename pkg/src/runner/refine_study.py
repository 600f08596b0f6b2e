# src/runner/refine_study.py
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.balayage.experiments import classical_swept_mass
from src.runner.output_formatter import OutputFormatter, to_jsonable
from src.runner.run_scenario import EXIT_CONFIG, EXIT_OK, EXIT_REPORT_FAILED, EXIT_SOLVER, scenario_output_dir
from src.runner.scenario_builder import Scenario, build_scenario
from src.runner.scenario_config import ScenarioConfig
from src.shared.energy import potential
from src.shared.errors import (
    ConfigError,
    FactorizationError,
    NonConvergenceError,
    NumericalConsistencyError,
    ValidationError,
)
from src.shared.reports import TheoremReport, make_report
from src.shared.settings import Settings
from src.solvers.equilibrium import classical_capacity

# allowed relative growth of a residual column from one level to the next
REFINE_SLACK = 0.1
# residuals below this are noise and never count as growth
REFINE_FLOOR = 1e-6

COLUMNS = [
    "level",
    "points",
    "h",
    "epsilon",
    "capacity",
    "capacity_error",
    "domination_residual",
    "mass_residual",
    "classical_mass_error",
]
MONOTONE_COLUMNS = ["capacity_error", "domination_residual", "mass_residual", "classical_mass_error"]


@dataclass
class RefineStudy:
    scenario: str
    exit_code: int
    table: pd.DataFrame = field(default_factory=pd.DataFrame)
    report: Optional[TheoremReport] = None
    output_dir: Optional[Path] = None
    message: str = ""


def refine_study(
    config: ScenarioConfig,
    levels: Sequence[int],
    settings: Optional[Settings] = None,
) -> RefineStudy:
    """
    Run the scenario's base sweep and equilibrium at each sphere-grid level
    with epsilon = h/2 and check that every residual column shrinks.
    """
    settings = settings or Settings()
    levels = [int(n) for n in levels]
    if not levels:
        raise ValidationError("refine study needs at least one grid level")
    if any(n < 2 for n in levels):
        raise ValidationError("every grid level needs at least 2 points")

    # epsilon always follows the grid in a refinement study
    kernel_cfg = config.kernel.model_copy(update={"epsilon": None, "epsilon_factor": 0.5})
    config = config.model_copy(update={"kernel": kernel_cfg})

    print(f"[START] refine {config.name}: levels {levels}")
    rows: List[Dict[str, Any]] = []
    try:
        for n in levels:
            sc = build_scenario(config, n_jobs=settings.threads, tol_scale=settings.tol_scale, count=n)
            rows.append(level_row(sc, n))
            print(f"[OK] refine {config.name} level {n}: capacity {rows[-1]['capacity']:.6f}")
    except ConfigError as exc:
        print(f"[FAIL] refine {config.name}: {exc}", file=sys.stderr)
        return RefineStudy(scenario=config.name, exit_code=EXIT_CONFIG, message=str(exc))
    except (NonConvergenceError, FactorizationError, NumericalConsistencyError) as exc:
        msg = f"level {n}: {type(exc).__name__}: {exc}"
        print(f"[FAIL] refine {config.name}: {msg}", file=sys.stderr)
        return RefineStudy(scenario=config.name, exit_code=EXIT_SOLVER, message=msg)

    table = pd.DataFrame(rows, columns=COLUMNS)
    report = check_refinement(table, slack=REFINE_SLACK * settings.tol_scale, label=config.name)

    out_dir = scenario_output_dir(config, settings) / "refine"
    formatter = OutputFormatter(out_dir)
    table.to_csv(out_dir / "refine.csv", index=False, float_format="%.17g")
    results = to_jsonable(
        {
            "scenario": config.name,
            "config_hash": config.config_hash(),
            "levels": levels,
            "rows": rows,
            "reports": [report.to_dict()],
        }
    )
    text = json.dumps(results, indent=2, sort_keys=True)
    (out_dir / "refine.json").write_text(text + "\n", encoding="utf-8")
    exit_code = EXIT_OK if report.passed else EXIT_REPORT_FAILED
    formatter.write_manifest(
        scenario=config.name,
        config_hash=config.config_hash(),
        results_sha256=hashlib.sha256((text + "\n").encode("utf-8")).hexdigest(),
        epsilon=float(rows[-1]["epsilon"]),
        grid_spacing=rows[-1]["h"],
        tables=["refine.csv"],
        exit_code=exit_code,
        extra={"levels": levels},
    )
    tag = "[OK]" if report.passed else "[FAIL]"
    print(f"{tag} refine {config.name}: worst growth {report.worst_residual:.3e} (slack {report.tolerance:.2f})")
    print(f"[DONE] refine {config.name}: exit {exit_code} -> {out_dir}")
    return RefineStudy(scenario=config.name, exit_code=exit_code, table=table, report=report, output_dir=out_dir)


def level_row(sc: Scenario, level: int) -> Dict[str, Any]:
    """Residuals of one grid level; classical columns are NaN without a closed form."""
    result = sc.base_sweep()
    gamma = sc.equilibrium()

    off = np.array([not sc.region.contains(p) for p in sc.probes], dtype=bool)
    probes = sc.probes[off]
    if probes.shape[0]:
        src = potential(sc.ctx, sc.source, probes)
        swp = potential(sc.ctx, result.swept, probes)
        scale = float(np.max(src)) if float(np.max(src)) > 0.0 else 1.0
        domination = max(0.0, float(np.max(swp - src))) / scale
    else:
        domination = 0.0

    if result.source_mass > 0.0:
        formula = float(sc.source.weights @ potential(sc.ctx, gamma.gamma, sc.source.points))
        mass_residual = abs(result.swept_mass - formula) / result.source_mass
    else:
        mass_residual = 0.0

    capacity_error = float("nan")
    classical_mass_error = float("nan")
    if sc.has_classical_reference():
        reference = classical_capacity(sc.radius, sc.kernel)
        capacity_error = abs(gamma.capacity - reference) / reference
        if result.source_mass > 0.0:
            classical = classical_swept_mass(sc.source, sc.center, sc.radius)
            classical_mass_error = abs(result.swept_mass - classical) / result.source_mass

    return {
        "level": int(level),
        "points": sc.region.size,
        "h": sc.grid_spacing,
        "epsilon": sc.kernel.epsilon,
        "capacity": gamma.capacity,
        "capacity_error": capacity_error,
        "domination_residual": domination,
        "mass_residual": mass_residual,
        "classical_mass_error": classical_mass_error,
    }


def check_refinement(table: pd.DataFrame, slack: float = REFINE_SLACK, label: str = "") -> TheoremReport:
    """
    Every residual column is nonincreasing across levels up to relative slack.

    The residual of a step is (next - prev) / prev; steps whose next value is
    below REFINE_FLOOR, and NaN columns, are ignored.
    """
    worst = 0.0
    details: List[Dict[str, Any]] = []
    for col in MONOTONE_COLUMNS:
        if col not in table.columns:
            continue
        values = table[col].to_numpy(dtype=float)
        for t in range(1, values.shape[0]):
            prev, nxt = values[t - 1], values[t]
            if np.isnan(prev) or np.isnan(nxt) or nxt <= REFINE_FLOOR:
                continue
            growth = (nxt - prev) / max(prev, REFINE_FLOOR)
            details.append({"column": col, "step": t, "previous": prev, "next": nxt, "growth": growth})
            worst = max(worst, growth)
    return make_report("refinement-monotone", worst, slack, details, label=label)
