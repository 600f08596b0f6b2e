# src/balayage/theorem_checks.py
from __future__ import annotations

import logging
import math
from typing import Any, Dict, List, Optional

import numpy as np

from src.shared.core_types import (
    DiscreteMeasure,
    EquilibriumResult,
    Region,
    SweepResult,
    as_points,
    make_measure,
    region_subset,
    restrict_to_region,
)
from src.shared.energy import (
    EnergyContext,
    energy,
    energy_distance,
    energy_distance_squared,
    measure_context,
    potential,
)
from src.shared.errors import ValidationError
from src.shared.kernels import KernelSpec
from src.shared.reports import TheoremReport, make_report
from src.balayage.sweep import sweep, sweep_truncated
from src.solvers.cone_qp import DEFAULT_TOLERANCE

logger = logging.getLogger(__name__)

# default budgets
DOMINATION_FACTOR = 1e-3
MASS_TOLERANCE = 2e-2
POSITIVITY_TOLERANCE = 1e-9
REST_FACTOR = 1e-6
FIXED_POINT_TOLERANCE = 1e-8
TRUNCATION_TOLERANCE = 1e-8
PYTHAGORAS_TOLERANCE = 1e-6

# rows kept in per-probe detail tables
DETAIL_ROWS = 10


def domination_budget(values: np.ndarray, factor: float = DOMINATION_FACTOR) -> float:
    """factor * max potential over the probes (0 for an empty probe set)."""
    return float(factor) * (float(np.max(values)) if values.size else 0.0)


def _worst_rows(points: np.ndarray, excess: np.ndarray, extra: Dict[str, np.ndarray]) -> List[Dict[str, Any]]:
    order = np.argsort(-excess, kind="stable")[:DETAIL_ROWS]
    rows = []
    for j in order:
        row: Dict[str, Any] = {"probe": int(j), "point": points[j].tolist(), "excess": float(excess[j])}
        for name, values in extra.items():
            row[name] = float(values[j])
        rows.append(row)
    return rows


def _relative_tol(ctx: EnergyContext, mu: DiscreteMeasure, factor: float) -> float:
    return float(factor) * (1.0 + math.sqrt(max(energy(ctx, mu), 0.0)))


# ----------------------------------------------------------------------
# SINGLE-SWEEP CHECKS
# ----------------------------------------------------------------------

def check_domination(
    result: SweepResult,
    probes: Any,
    tol: Optional[float] = None,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """Swept potential never exceeds the source potential at the probes."""
    ctx = measure_context(result.kernel, ctx=ctx)
    pts = as_points(probes, dim=result.region.dim)
    src = potential(ctx, result.source, pts)
    swp = potential(ctx, result.swept, pts)
    tol = domination_budget(src) if tol is None else float(tol)
    excess = swp - src
    worst = max(0.0, float(np.max(excess))) if excess.size else 0.0
    rows = _worst_rows(pts, excess, {"source_potential": src, "swept_potential": swp}) if excess.size else []
    notes = []
    if worst > tol:
        logger.warning("domination residual %.3e above %.3e on %s", worst, tol, result.region.label or "region")
        notes.append("swept potential exceeds source potential")
    return make_report("domination", worst, tol, rows, notes, label=result.region.label)


def check_mass(
    result: SweepResult,
    gamma: EquilibriumResult,
    tol_mass: float = MASS_TOLERANCE,
    tol_positivity: float = POSITIVITY_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """
    Positivity of mass and the mass formula swept(X) = sum_i mu_i * (equilibrium potential at x_i).

    Both residuals are relative to the source mass; the positivity excess is
    rescaled by tol_mass / tol_positivity so one tolerance decides.
    """
    ctx = measure_context(result.kernel, ctx=ctx)
    source_mass = result.source_mass
    if source_mass <= 0.0:
        return make_report("mass", 0.0, tol_mass, label=result.region.label)
    eq_pot = potential(ctx, gamma.gamma, result.source.points)
    formula = float(result.source.weights @ eq_pot)
    formula_res = abs(result.swept_mass - formula) / source_mass
    excess = max(0.0, result.swept_mass / source_mass - 1.0)
    positivity_res = excess * tol_mass / tol_positivity
    rows = [
        {"quantity": "source_mass", "value": source_mass},
        {"quantity": "swept_mass", "value": result.swept_mass},
        {"quantity": "mass_formula", "value": formula, "residual": formula_res},
        {"quantity": "mass_excess", "value": excess, "residual": positivity_res},
    ]
    notes = []
    if excess > tol_positivity:
        notes.append("swept mass exceeds source mass")
    return make_report("mass", max(formula_res, positivity_res), tol_mass, rows, notes, label=result.region.label)


def check_certificate(result: SweepResult) -> TheoremReport:
    """KKT residuals of the projection against the solver tolerance tol * (1 + max|b|)."""
    tol = result.tolerance
    worst = max(result.kkt_stationarity, result.kkt_dual_feasibility, result.kkt_complementarity)
    rows = [
        {"quantity": "stationarity", "value": result.kkt_stationarity},
        {"quantity": "dual_feasibility", "value": result.kkt_dual_feasibility},
        {"quantity": "complementarity", "value": result.kkt_complementarity},
        {"quantity": "support_equality", "value": result.support_equality_residual},
        {"quantity": "region_inequality", "value": result.region_inequality_residual},
    ]
    return make_report("kkt-certificate", worst, tol, rows, label=result.region.label)


def check_projection_identities(
    result: SweepResult,
    samples: int = 50,
    seed: int = 0,
    tol: float = PYTHAGORAS_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """
    Pythagoras ||mu||^2 = ||mu - swept||^2 + ||swept||^2 and the minimal-norm
    inequality ||nu - swept||^2 <= ||mu - nu||^2 - ||mu - swept||^2 for random
    positive nu on the region. Residuals are relative to ||mu||^2.
    """
    ctx = measure_context(result.kernel, ctx=ctx)
    mu, swept, region = result.source, result.swept, result.region
    norm2 = energy(ctx, mu)
    if norm2 <= 0.0 or region.is_empty():
        return make_report("projection-identities", 0.0, tol, label=region.label)

    rows: List[Dict[str, Any]] = []
    notes: List[str] = []
    dist2 = energy_distance_squared(ctx, mu, swept)
    worst = 0.0
    if not result.mass_cap_active:
        pyth = abs(norm2 - dist2 - energy(ctx, swept)) / norm2
        rows.append({"check": "pythagoras", "residual": pyth})
        worst = pyth
    else:
        notes.append("mass cap active: Pythagoras identity not asserted")

    rng = np.random.default_rng(seed)
    scale = max(result.swept_mass, result.source_mass, 1e-12)
    for s in range(int(samples)):
        density = rng.random(region.size) * (rng.random(region.size) < 0.5)
        if not np.any(density > 0.0):
            density[rng.integers(region.size)] = 1.0
        w = density / float(np.sum(density)) * scale * rng.uniform(0.25, 2.0)
        if s % 2 == 1:
            w = swept.weights + 0.1 * w
        nu = make_measure(region.points, w, dim=region.dim)
        lhs = energy_distance_squared(ctx, nu, swept)
        rhs = energy_distance_squared(ctx, mu, nu) - dist2
        res = max(0.0, lhs - rhs) / norm2
        worst = max(worst, res)
        rows.append({"check": "minimal-norm", "sample": s, "residual": res})
    return make_report("projection-identities", worst, tol, rows, notes, label=region.label)


def check_minimal_potential(
    result: SweepResult,
    probes: Any,
    samples: int = 20,
    seed: int = 0,
    tol: Optional[float] = None,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """
    Among measures nu on the region whose potential dominates the source
    potential on the region, the swept potential is the smallest at every probe.
    """
    ctx = measure_context(result.kernel, ctx=ctx)
    region = result.region
    pts = as_points(probes, dim=region.dim)
    swp = potential(ctx, result.swept, pts)
    src = potential(ctx, result.source, pts)
    tol = domination_budget(src) if tol is None else float(tol)
    if region.is_empty() or result.source.is_zero():
        return make_report("minimal-potential", 0.0, tol, label=region.label)

    b = potential(ctx, result.source, region.points)
    K = ctx.gram(region.points)
    rng = np.random.default_rng(seed)
    worst = 0.0
    rows: List[Dict[str, Any]] = []
    for s in range(int(samples)):
        if s % 2 == 0:
            w = result.swept.weights + rng.random(region.size) * (rng.random(region.size) < 0.2) * result.swept_mass / region.size
        else:
            density = rng.random(region.size) + 1e-3
            need = b / (K @ density)
            w = density * float(np.max(need))
        nu = make_measure(region.points, w, dim=region.dim)
        shortfall = float(np.max(b - K @ w))
        gap = swp - potential(ctx, nu, pts)
        res = max(0.0, float(np.max(gap)))
        worst = max(worst, res)
        rows.append({"sample": s, "residual": res, "constraint_shortfall": max(0.0, shortfall)})
    return make_report("minimal-potential", worst, tol, rows, label=region.label)


def check_idempotence(
    mu: DiscreteMeasure,
    region: Region,
    kernel: KernelSpec,
    tol: float = FIXED_POINT_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """A measure already carried by the region is its own balayage."""
    ctx = measure_context(kernel, ctx=ctx)
    # raises when an atom of mu is off the region
    restrict_to_region(mu, region)
    res = sweep(mu, region, kernel, ctx=ctx)
    dist = res.energy_distance
    rows = [{"energy_distance": dist, "source_mass": res.source_mass, "swept_mass": res.swept_mass}]
    return make_report("idempotence", dist, _relative_tol(ctx, mu, tol), rows, label=region.label)


def check_uniqueness(
    mu: DiscreteMeasure,
    region: Region,
    kernel: KernelSpec,
    seed: int = 0,
    tol: float = FIXED_POINT_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """Sweeping onto a permuted copy of the region yields the same measure."""
    ctx = measure_context(kernel, ctx=ctx)
    first = sweep(mu, region, kernel, ctx=ctx)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(region.size)
    shuffled = Region(points=as_points(region.points[perm], dim=region.dim), label=f"{region.label}-permuted")
    second = sweep(mu, shuffled, kernel, ctx=ctx)
    dist = energy_distance(ctx, first.swept, second.swept)
    rows = [{"energy_distance": dist, "iterations_first": first.iterations, "iterations_second": second.iterations}]
    return make_report("uniqueness", dist, _relative_tol(ctx, mu, tol), rows, label=region.label)


def check_monotonicity(
    mu: DiscreteMeasure,
    a: Region,
    q: Region,
    kernel: KernelSpec,
    probes: Any,
    tol: Optional[float] = None,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """Balayage onto a subregion has the smaller potential at every probe."""
    if not region_subset(a, q):
        raise ValidationError(f"region {a.label} is not contained in {q.label}")
    ctx = measure_context(kernel, ctx=ctx)
    pts = as_points(probes, dim=q.dim)
    pot_a = potential(ctx, sweep(mu, a, kernel, ctx=ctx).swept, pts)
    pot_q = potential(ctx, sweep(mu, q, kernel, ctx=ctx).swept, pts)
    tol = domination_budget(potential(ctx, mu, pts)) if tol is None else float(tol)
    excess = pot_a - pot_q
    worst = max(0.0, float(np.max(excess))) if excess.size else 0.0
    rows = _worst_rows(pts, excess, {"potential_sub": pot_a, "potential_super": pot_q}) if excess.size else []
    return make_report("monotonicity", worst, tol, rows, label=f"{a.label}<{q.label}")


def check_sweep_with_rest(
    mu: DiscreteMeasure,
    a: Region,
    q: Region,
    kernel: KernelSpec,
    tol_factor: float = REST_FACTOR,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """
    Sweeping onto q and then onto a equals sweeping onto a directly.

    Exact in the discrete model when the swept support onto a lies inside
    the swept support onto q; the report notes when that fails.
    """
    if not region_subset(a, q):
        raise ValidationError(f"region {a.label} is not contained in {q.label}")
    ctx = measure_context(kernel, ctx=ctx)
    direct = sweep(mu, a, kernel, ctx=ctx)
    via_q = sweep(mu, q, kernel, ctx=ctx)
    two_step = sweep(via_q.swept, a, kernel, ctx=ctx)
    dist = energy_distance(ctx, direct.swept, two_step.swept)
    tol = tol_factor * math.sqrt(max(energy(ctx, mu), 0.0))

    notes: List[str] = []
    q_support = {tuple(p) for p, w in zip(via_q.swept.points.tolist(), via_q.swept.weights) if w > 0.0}
    outside = sum(1 for p, w in zip(two_step.swept.points.tolist(), two_step.swept.weights) if w > 0.0 and tuple(p) not in q_support)
    if outside:
        notes.append(f"{outside} atoms of the two-step sweep lie off the support of the sweep onto {q.label}")
    rows = [
        {"energy_distance": dist, "mass_direct": direct.swept_mass, "mass_two_step": two_step.swept_mass, "off_support_atoms": outside}
    ]
    return make_report("sweep-with-rest", dist, tol, rows, notes, label=f"{a.label}<{q.label}")


def check_truncated(
    mu: DiscreteMeasure,
    region: Region,
    kernel: KernelSpec,
    q_factor: float = 1.0,
    tol: float = TRUNCATION_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """
    Capping the swept mass at q_factor * mu(X) changes nothing.

    The residual is the larger of the energy distance between the capped
    and plain sweeps and the cap multiplier; a binding cap fails the check.
    """
    ctx = measure_context(kernel, ctx=ctx)
    plain = sweep(mu, region, kernel, ctx=ctx)
    capped = sweep_truncated(mu, region, kernel, q_factor=q_factor, ctx=ctx)
    dist = energy_distance(ctx, plain.swept, capped.swept)
    binding = capped.mass_cap_active and capped.multiplier > capped.tolerance
    residual = max(dist, capped.multiplier if binding else 0.0)
    notes: List[str] = []
    if binding:
        notes.append("mass cap binds: domination fails for this kernel regularization")
    rows = [
        {
            "q_factor": q_factor,
            "cap": q_factor * mu.total_mass,
            "mass_plain": plain.swept_mass,
            "mass_capped": capped.swept_mass,
            "multiplier": capped.multiplier,
            "energy_distance": dist,
        }
    ]
    return make_report("truncated", residual, tol, rows, notes, label=region.label)
