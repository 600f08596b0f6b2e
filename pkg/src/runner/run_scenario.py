# src/runner/run_scenario.py
from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.spatial.transform import Rotation

from src.balayage.experiments import (
    EXACT_TOLERANCE,
    MONOTONE_TOLERANCE,
    classical_swept_mass,
    decreasing_experiment,
    exhaustion_experiment,
    increasing_union_experiment,
    potential_profile,
    random_nested_chain,
)
from src.balayage.theorem_checks import (
    FIXED_POINT_TOLERANCE,
    MASS_TOLERANCE,
    POSITIVITY_TOLERANCE,
    PYTHAGORAS_TOLERANCE,
    REST_FACTOR,
    TRUNCATION_TOLERANCE,
    check_certificate,
    check_domination,
    check_idempotence,
    check_mass,
    check_minimal_potential,
    check_monotonicity,
    check_projection_identities,
    check_sweep_with_rest,
    check_truncated,
    check_uniqueness,
    domination_budget,
)
from src.runner.output_formatter import ExperimentOutcome, OutputFormatter
from src.runner.scenario_builder import Scenario, build_scenario
from src.runner.scenario_config import ScenarioConfig, SubregionSelector
from src.runner.scenario_loader import load_scenario_file
from src.shared.core_types import Region, make_region, region_select, region_union
from src.shared.energy import potential
from src.shared.errors import (
    ConfigError,
    FactorizationError,
    KernelError,
    NonConvergenceError,
    NumericalConsistencyError,
    ValidationError,
)
from src.shared.grids import fibonacci_sphere, on_region_measure
from src.shared.reports import TheoremReport, failed_report, make_report
from src.shared.run_logger import RunEvent, RunLogger
from src.shared.settings import Settings
from src.solvers.equilibrium import (
    FROSTMAN_TOLERANCE,
    check_capacity_routes,
    check_equilibrium_exhaustion,
    check_equilibrium_identities,
    check_frostman,
    classical_capacity,
    equilibrium_exhaustion,
)

EXIT_OK = 0
EXIT_REPORT_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

IDENTITY_TOLERANCE = 1e-6
CAPACITY_TOLERANCE = 5e-2

# rng streams for experiment-level randomness (builder uses 1 and 2)
SUBREGION_STREAM = 3
IDEMPOTENCE_STREAM = 4
CHAIN_STREAM = 100


@dataclass
class ScenarioRun:
    scenario: str
    exit_code: int
    output_dir: Optional[Path] = None
    outcomes: List[ExperimentOutcome] = field(default_factory=list)
    message: str = ""

    @property
    def reports(self) -> List[TheoremReport]:
        return [r for o in self.outcomes for r in o.reports]


# ----------------------------------------------------------------------
# PUBLIC API
# ----------------------------------------------------------------------

def run_scenario(path: str | Path, settings: Optional[Settings] = None) -> ScenarioRun:
    """
    Load a scenario file, run its experiments and write the artifacts.

    Exit codes: 0 every report passes, 1 some report fails, 2 config error,
    3 solver failure.
    """
    try:
        config = load_scenario_file(path)
    except ConfigError as exc:
        print(f"[FAIL] {path}: {exc}", file=sys.stderr)
        return ScenarioRun(scenario=Path(path).stem, exit_code=EXIT_CONFIG, message=str(exc))
    return execute_scenario(config, settings)


def execute_scenario(config: ScenarioConfig, settings: Optional[Settings] = None) -> ScenarioRun:
    settings = settings or Settings()
    try:
        scenario = build_scenario(config, n_jobs=settings.threads, tol_scale=settings.tol_scale)
    except ConfigError as exc:
        print(f"[FAIL] {config.name}: {exc}", file=sys.stderr)
        return ScenarioRun(scenario=config.name, exit_code=EXIT_CONFIG, message=str(exc))

    out_dir = scenario_output_dir(config, settings)
    formatter = OutputFormatter(out_dir)
    run_logger = RunLogger(out_dir)
    names = config.experiment_names()

    print(f"[START] {config.name}: {len(names)} experiment(s), {scenario.region.size} region points, "
          f"epsilon={scenario.kernel.epsilon:.6g}")

    outcomes: List[ExperimentOutcome] = Parallel(n_jobs=settings.threads, prefer="threads")(
        delayed(run_experiment)(scenario, name, exp, formatter, run_logger)
        for name, exp in zip(names, config.experiments)
    )

    exit_code = _exit_code(outcomes)
    results = formatter.format_results(
        scenario=config.name,
        config_hash=config.config_hash(),
        kernel=scenario.kernel.to_dict(),
        grid_spacing=scenario.grid_spacing,
        outcomes=outcomes,
    )
    results_sha = formatter.write_results(results)
    tables = [t for o in outcomes for t in o.tables] + [formatter.write_reports_csv(outcomes)]
    formatter.write_manifest(
        scenario=config.name,
        config_hash=config.config_hash(),
        results_sha256=results_sha,
        epsilon=scenario.kernel.epsilon,
        grid_spacing=scenario.grid_spacing,
        tables=tables,
        exit_code=exit_code,
        extra={"tol_scale": settings.tol_scale, "threads": settings.threads},
    )
    print(f"[DONE] {config.name}: exit {exit_code} -> {out_dir}")
    return ScenarioRun(scenario=config.name, exit_code=exit_code, output_dir=out_dir, outcomes=outcomes)


def scenario_output_dir(config: ScenarioConfig, settings: Settings) -> Path:
    if config.output_dir:
        p = Path(config.output_dir)
        return p if p.is_absolute() else settings.output_root / p
    return settings.output_root / config.name


def run_experiment(
    scenario: Scenario,
    name: str,
    exp: Any,
    formatter: OutputFormatter,
    run_logger: RunLogger,
) -> ExperimentOutcome:
    """Run one experiment; solver and parameter failures are captured on the outcome."""
    run_logger.log(RunEvent(scenario=scenario.name, event="start", experiment=name, data={"kind": exp.kind}))
    handler = HANDLERS[exp.kind]
    outcome = ExperimentOutcome(name=name, kind=exp.kind)
    try:
        handler(scenario, exp, outcome, formatter)
    except (NonConvergenceError, FactorizationError, NumericalConsistencyError) as exc:
        outcome.failure = f"{type(exc).__name__}: {exc}"
        outcome.error_kind = "solver"
    except (ValidationError, KernelError, ConfigError) as exc:
        outcome.failure = f"{type(exc).__name__}: {exc}"
        outcome.error_kind = "config"

    if outcome.failure:
        outcome.reports.append(failed_report(exp.kind, exp.tolerance or 0.0, outcome.failure, label=name))
        print(f"[FAIL] {scenario.name}/{name}: {outcome.failure}", file=sys.stderr)
        run_logger.log(
            RunEvent(scenario=scenario.name, event="failure", experiment=name, status=outcome.error_kind,
                     message=outcome.failure)
        )
        return outcome

    for report in outcome.reports:
        tag = "[OK]" if report.passed else "[FAIL]"
        print(f"{tag} {scenario.name}/{name} {report.theorem_id}{_label(report)}: "
              f"worst {report.worst_residual:.3e} (tol {report.tolerance:.3e})")
        for note in report.notes:
            if not report.passed:
                print(f"[WARN] {scenario.name}/{name}: {note}")
                run_logger.log(
                    RunEvent(scenario=scenario.name, event="warning", experiment=name, message=note)
                )
    run_logger.log(
        RunEvent(
            scenario=scenario.name,
            event="finish",
            experiment=name,
            status="pass" if outcome.passed else "fail",
            data={"reports": [r.to_row() for r in outcome.reports], "tables": outcome.tables},
        )
    )
    return outcome


# ----------------------------------------------------------------------
# HANDLERS
# ----------------------------------------------------------------------

def _sweep(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    result = sc.base_sweep()
    out.sweeps.append({"experiment": out.name, **result.to_dict()})
    out.reports.append(check_certificate(result))
    swept = result.swept
    axes = ["x", "y", "z"] if swept.dim == 3 else [f"x{i}" for i in range(swept.dim)]
    frame = pd.DataFrame(swept.points, columns=axes).assign(weight=swept.weights)
    out.tables.append(fmt.write_table(f"{out.name}-weights", frame))
    if sc.ray_points is not None:
        rays = sc.config.probes.rays
        center = rays.center if rays.center is not None else sc.center
        profile = potential_profile(result, rays.directions, rays.radii, center, ctx=sc.ctx)
        out.tables.append(fmt.write_table(f"{out.name}-profile", profile))


def _domination(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    result = sc.base_sweep()
    report = check_domination(result, sc.probes, tol=_budget_tol(sc, exp), ctx=sc.ctx)
    out.reports.append(report)
    out.tables.append(fmt.write_table(out.name, report.details_frame()))


def _mass(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    result = sc.base_sweep()
    gamma = sc.equilibrium()
    tol_mass = _scaled(sc, exp, MASS_TOLERANCE)
    report = check_mass(result, gamma, tol_mass=tol_mass, tol_positivity=POSITIVITY_TOLERANCE * sc.tol_scale,
                        ctx=sc.ctx)
    out.reports.append(report)
    rows = [dict(r) for r in report.details]
    if sc.has_classical_reference():
        classical = classical_swept_mass(result.source, sc.center, sc.radius)
        residual = abs(result.swept_mass - classical) / result.source_mass if result.source_mass > 0.0 else 0.0
        rows.append({"quantity": "classical_swept_mass", "value": classical, "residual": residual})
        out.reports.append(
            make_report(
                "classical-mass",
                residual,
                tol_mass,
                [{"swept_mass": result.swept_mass, "classical_swept_mass": classical}],
                label=result.region.label,
            )
        )
    out.tables.append(fmt.write_table(out.name, pd.DataFrame(rows)))


def _equilibrium(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    gamma = sc.equilibrium()
    out.equilibria.append({"experiment": out.name, **gamma.to_dict()})
    tol = _scaled(sc, exp, IDENTITY_TOLERANCE)
    out.reports.append(check_equilibrium_identities(gamma, tol=tol))
    out.reports.append(check_capacity_routes(sc.region, sc.kernel, tol=tol, ctx=sc.ctx))
    row: Dict[str, Any] = {
        "points": sc.region.size,
        "h": sc.grid_spacing,
        "epsilon": sc.kernel.epsilon,
        "capacity": gamma.capacity,
        "energy": gamma.energy,
        "min_potential_on_region": gamma.min_potential_on_region,
        "max_potential_on_support": gamma.max_potential_on_support,
    }
    if sc.has_classical_reference():
        reference = classical_capacity(sc.radius, sc.kernel)
        error = abs(gamma.capacity - reference) / reference
        row.update({"classical_capacity": reference, "capacity_error": error})
        out.reports.append(
            make_report(
                "classical-capacity",
                error,
                CAPACITY_TOLERANCE * sc.tol_scale,
                [{"capacity": gamma.capacity, "classical_capacity": reference}],
                label=sc.region.label,
            )
        )
    out.tables.append(fmt.write_table(out.name, pd.DataFrame([row])))


def _frostman(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    gamma = sc.equilibrium()
    report = check_frostman(gamma, sc.kernel, sc.probes, tol=_scaled(sc, exp, FROSTMAN_TOLERANCE), ctx=sc.ctx)
    out.reports.append(report)
    pot = potential(sc.ctx, gamma.gamma, sc.probes)
    frame = pd.DataFrame({"probe": np.arange(pot.shape[0]), "equilibrium_potential": pot})
    out.tables.append(fmt.write_table(out.name, frame))


def _monotonicity(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    sub = select_subregion(sc, exp.subregion)
    report = check_monotonicity(sc.source, sub, sc.region, sc.kernel, sc.probes, tol=_budget_tol(sc, exp), ctx=sc.ctx)
    out.reports.append(report)
    out.tables.append(fmt.write_table(out.name, report.details_frame()))


def _rest(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    sub = select_subregion(sc, exp.subregion)
    report = check_sweep_with_rest(sc.source, sub, sc.region, sc.kernel, tol_factor=_scaled(sc, exp, REST_FACTOR),
                                   ctx=sc.ctx)
    out.reports.append(report)
    out.tables.append(fmt.write_table(out.name, report.details_frame()))


def _truncated(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    report = check_truncated(sc.source, sc.region, sc.kernel, q_factor=exp.q_factor,
                             tol=_scaled(sc, exp, TRUNCATION_TOLERANCE), ctx=sc.ctx)
    out.reports.append(report)
    out.tables.append(fmt.write_table(out.name, report.details_frame()))


def _exhaustion(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    tol = _scaled(sc, exp, EXACT_TOLERANCE)
    tol_monotone = _monotone_tol(sc, exp)
    reports, frames = [], []
    for c in range(exp.chains):
        chain = random_nested_chain(sc.region, exp.chain_sizes, sc.rng(CHAIN_STREAM + c))
        report = exhaustion_experiment(
            sc.source, sc.region, chain, sc.kernel, sc.probes, tol=tol, tol_monotone=tol_monotone, ctx=sc.ctx
        )
        reports.append(_relabel(report, f"chain-{c}"))
        frames.append(report.details_frame().assign(chain=c))
    out.reports.extend(_mark_worst(reports))
    out.tables.append(fmt.write_table(out.name, _chain_table(frames)))


def _increasing_union(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    tol = _scaled(sc, exp, EXACT_TOLERANCE)
    tol_monotone = _monotone_tol(sc, exp)
    reports, frames = [], []
    for c in range(exp.chains):
        chain = random_nested_chain(sc.region, exp.chain_sizes, sc.rng(CHAIN_STREAM + c))
        report = increasing_union_experiment(
            sc.source, chain, sc.kernel, sc.probes, tol=tol, tol_monotone=tol_monotone, ctx=sc.ctx
        )
        reports.append(_relabel(report, f"chain-{c}"))
        frames.append(report.details_frame().assign(chain=c))
    out.reports.extend(_mark_worst(reports))
    out.tables.append(fmt.write_table(out.name, _chain_table(frames)))


def _decreasing(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    if sc.kernel.dim != 3:
        raise ConfigError("decreasing chains use sphere shells and need dim 3", path="experiments")
    center = sc.center if sc.center is not None else np.zeros(3)
    radii = sorted((float(r) for r in exp.extra_shells), reverse=True)
    tol = _scaled(sc, exp, EXACT_TOLERANCE)
    tol_monotone = _monotone_tol(sc, exp)
    reports, frames = [], []
    for c in range(exp.chains):
        # each chain turns every shell grid by its own random rotation; shells leave outermost first
        turns = Rotation.random(len(radii), random_state=sc.rng(CHAIN_STREAM + c))
        shells = [
            make_region(turns[k].apply(fibonacci_sphere(exp.count, r)) + center, label=f"shell-{r:g}")
            for k, r in enumerate(radii)
        ]
        chain: List[Region] = [
            region_union([sc.region] + shells[t:], label=f"{sc.region.label}+{len(shells) - t}")
            for t in range(len(shells))
        ]
        chain.append(sc.region)
        report = decreasing_experiment(
            sc.source, chain, sc.region, sc.kernel, sc.probes, tol=tol, tol_monotone=tol_monotone, ctx=sc.ctx
        )
        reports.append(_relabel(report, f"chain-{c}"))
        frames.append(report.details_frame().assign(chain=c))
    out.reports.extend(_mark_worst(reports))
    out.tables.append(fmt.write_table(out.name, _chain_table(frames)))


def _equilibrium_exhaustion(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    tol = _scaled(sc, exp, MONOTONE_TOLERANCE)
    reports, frames = [], []
    for c in range(exp.chains):
        chain = random_nested_chain(sc.region, exp.chain_sizes, sc.rng(CHAIN_STREAM + c))
        table = equilibrium_exhaustion(sc.region, chain, sc.kernel, sc.probes, ctx=sc.ctx)
        reports.append(check_equilibrium_exhaustion(table, tol=tol, label=f"chain-{c}"))
        frames.append(pd.DataFrame(table.rows()).assign(chain=c))
    out.reports.extend(_mark_worst(reports))
    out.tables.append(fmt.write_table(out.name, _chain_table(frames)))


def _uniqueness(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    report = check_uniqueness(sc.source, sc.region, sc.kernel, seed=sc.config.seed,
                              tol=_scaled(sc, exp, FIXED_POINT_TOLERANCE), ctx=sc.ctx)
    out.reports.append(report)


def _minimal_potential(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    report = check_minimal_potential(
        sc.base_sweep(), sc.probes, samples=exp.samples, seed=sc.config.seed, tol=_budget_tol(sc, exp), ctx=sc.ctx
    )
    out.reports.append(report)
    out.tables.append(fmt.write_table(out.name, report.details_frame()))


def _idempotence(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    mass = sc.source.total_mass if sc.source.total_mass > 0.0 else 1.0
    mu = on_region_measure(sc.region, mass, exp.fraction, sc.rng(IDEMPOTENCE_STREAM))
    report = check_idempotence(mu, sc.region, sc.kernel, tol=_scaled(sc, exp, FIXED_POINT_TOLERANCE), ctx=sc.ctx)
    out.reports.append(report)


def _projection_identities(sc: Scenario, exp: Any, out: ExperimentOutcome, fmt: OutputFormatter) -> None:
    report = check_projection_identities(
        sc.base_sweep(), samples=exp.samples, seed=sc.config.seed, tol=_scaled(sc, exp, PYTHAGORAS_TOLERANCE),
        ctx=sc.ctx,
    )
    out.reports.append(report)
    out.tables.append(fmt.write_table(out.name, report.details_frame()))


HANDLERS: Dict[str, Callable[[Scenario, Any, ExperimentOutcome, OutputFormatter], None]] = {
    "sweep": _sweep,
    "domination": _domination,
    "mass": _mass,
    "equilibrium": _equilibrium,
    "frostman": _frostman,
    "monotonicity": _monotonicity,
    "rest": _rest,
    "truncated": _truncated,
    "exhaustion": _exhaustion,
    "increasing-union": _increasing_union,
    "decreasing": _decreasing,
    "equilibrium-exhaustion": _equilibrium_exhaustion,
    "uniqueness": _uniqueness,
    "minimal-potential": _minimal_potential,
    "idempotence": _idempotence,
    "projection-identities": _projection_identities,
}


# ----------------------------------------------------------------------
# HELPERS
# ----------------------------------------------------------------------

def select_subregion(sc: Scenario, sel: SubregionSelector) -> Region:
    region = sc.region
    if sel.kind == "hemisphere":
        if sel.axis >= region.dim:
            raise ConfigError(f"hemisphere axis {sel.axis} out of range for dim {region.dim}", path="subregion.axis")
        center = sc.center if sc.center is not None else region.points.mean(axis=0)
        idx = np.flatnonzero(region.points[:, sel.axis] >= center[sel.axis])
        label = f"{region.label}-upper{sel.axis}"
    elif sel.kind == "random-subset":
        k = max(1, int(round(sel.fraction * region.size)))
        idx = sc.rng(SUBREGION_STREAM).choice(region.size, size=k, replace=False)
        label = f"{region.label}-random{k}"
    else:
        if sel.index >= region.size:
            raise ConfigError(f"subregion index {sel.index} out of range ({region.size} points)", path="subregion.index")
        idx = np.array([sel.index])
        label = f"{region.label}-point{sel.index}"
    if idx.size == 0:
        raise ConfigError("subregion selector picked no points", path="subregion")
    return region_select(region, idx, label=label)


def _scaled(sc: Scenario, exp: Any, default: float) -> float:
    base = exp.tolerance if exp.tolerance is not None else default
    return float(base) * sc.tol_scale


def _budget_tol(sc: Scenario, exp: Any) -> float:
    """Explicit tolerance, else 1e-3 * max source potential over the probes."""
    if exp.tolerance is not None:
        return float(exp.tolerance) * sc.tol_scale
    return domination_budget(potential(sc.ctx, sc.source, sc.probes)) * sc.tol_scale


def _monotone_tol(sc: Scenario, exp: Any) -> float:
    if exp.tolerance_monotone is not None:
        return float(exp.tolerance_monotone) * sc.tol_scale
    return MONOTONE_TOLERANCE * sc.tol_scale


def _relabel(report: TheoremReport, label: str) -> TheoremReport:
    return replace(report, label=label)


def _mark_worst(reports: List[TheoremReport]) -> List[TheoremReport]:
    """Note on the chain with the largest residual relative to its tolerance."""
    if len(reports) < 2:
        return reports
    ratios = [r.worst_residual / r.tolerance if r.tolerance > 0.0 else r.worst_residual for r in reports]
    k = int(np.argmax(ratios))
    worst = reports[k]
    reports = list(reports)
    reports[k] = replace(worst, notes=list(worst.notes) + [f"worst of {len(reports)} chains"])
    return reports


def _chain_table(frames: List[pd.DataFrame]) -> pd.DataFrame:
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    if "chain" in frame.columns:
        frame = frame[["chain"] + [c for c in frame.columns if c != "chain"]]
    return frame


def _label(report: TheoremReport) -> str:
    return f" [{report.label}]" if report.label else ""


def _exit_code(outcomes: List[ExperimentOutcome]) -> int:
    if any(o.error_kind == "config" for o in outcomes):
        return EXIT_CONFIG
    if any(o.error_kind == "solver" for o in outcomes):
        return EXIT_SOLVER
    if not all(o.passed for o in outcomes):
        return EXIT_REPORT_FAILED
    return EXIT_OK
