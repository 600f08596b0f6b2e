# src/balayage/experiments.py
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.shared.core_types import (
    DiscreteMeasure,
    Region,
    SweepResult,
    as_points,
    region_intersection,
    region_select,
    region_subset,
    region_union,
)
from src.shared.energy import EnergyContext, energy, energy_distance_squared, measure_context, potential
from src.shared.grids import ray_points
from src.shared.errors import ValidationError
from src.shared.kernels import KernelSpec
from src.shared.reports import TheoremReport, make_report
from src.balayage.sweep import sweep

logger = logging.getLogger(__name__)

EXACT_TOLERANCE = 1e-7
MONOTONE_TOLERANCE = 1e-7


def random_nested_chain(region: Region, sizes: Sequence[int], rng: np.random.Generator) -> List[Region]:
    """Nested random subsets of the region with the given (increasing) sizes."""
    sizes = [int(s) for s in sizes]
    if any(s < 1 or s > region.size for s in sizes):
        raise ValidationError(f"chain sizes must lie in [1, {region.size}]")
    if sizes != sorted(sizes):
        raise ValidationError("chain sizes must be nondecreasing")
    order = rng.permutation(region.size)
    return [region_select(region, order[:s], label=f"{region.label}-k{s}") for s in sizes]


def _chain_rows(
    ctx: EnergyContext,
    mu: DiscreteMeasure,
    results: List[SweepResult],
    pots: np.ndarray,
) -> List[Dict[str, Any]]:
    rows = []
    for t, res in enumerate(results):
        row: Dict[str, Any] = {
            "step": t,
            "label": res.region.label,
            "points": res.region.size,
            "swept_mass": res.swept_mass,
            "distance_to_source": res.energy_distance,
        }
        for j, v in enumerate(pots[t]):
            row[f"probe_{j}"] = float(v)
        rows.append(row)
    return rows


def _sweep_chain(
    mu: DiscreteMeasure,
    steps: Sequence[Region],
    kernel: KernelSpec,
    probes: np.ndarray,
    ctx: EnergyContext,
):
    results = [sweep(mu, r, kernel, ctx=ctx) for r in steps]
    pots = np.vstack([potential(ctx, res.swept, probes) for res in results]) if results else np.zeros((0, 0))
    return results, pots


def exhaustion_experiment(
    mu: DiscreteMeasure,
    region: Region,
    chain: Sequence[Region],
    kernel: KernelSpec,
    probes: Any,
    tol: float = EXACT_TOLERANCE,
    tol_monotone: float = MONOTONE_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
    theorem_id: str = "exhaustion",
) -> TheoremReport:
    """
    Sweeps onto an increasing chain K_1 c K_2 c ... c region.

    Asserted: distances to the final sweep nonincreasing with the last one
    ~0, and the Cauchy inequality
        ||mu^Ki - mu^Kj||^2 <= ||mu - mu^Ki||^2 - ||mu - mu^Kj||^2   (i < j)
    within tol * ||mu||^2; probe potentials nondecreasing within
    tol_monotone (absolute).
    """
    for t in range(len(chain)):
        nxt = chain[t + 1] if t + 1 < len(chain) else region
        if not region_subset(chain[t], nxt):
            raise ValidationError(f"chain element {t} ({chain[t].label}) is not contained in its successor")
    ctx = measure_context(kernel, ctx=ctx)
    pts = as_points(probes, dim=region.dim)
    steps = list(chain)
    if not steps or not (steps[-1] == region):
        steps.append(region)

    results, pots = _sweep_chain(mu, steps, kernel, pts, ctx)
    exact_budget = tol * (1.0 + energy(ctx, mu))
    monotone_budget = float(tol_monotone)

    final = results[-1].swept
    to_final = [energy_distance_squared(ctx, r.swept, final) ** 0.5 for r in results]
    dist_rises = [max(0.0, to_final[t + 1] - to_final[t]) for t in range(len(to_final) - 1)]

    cauchy = 0.0
    d2 = [r.energy_distance**2 for r in results]
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            lhs = energy_distance_squared(ctx, results[i].swept, results[j].swept)
            cauchy = max(cauchy, lhs - (d2[i] - d2[j]))

    drops = float(np.max(pots[:-1] - pots[1:])) if pots.shape[0] > 1 and pots.shape[1] else 0.0

    exact_worst = max([0.0, cauchy, to_final[-1]] + dist_rises)
    # the exact and the potential residuals are normalized to their own budgets
    worst = max(exact_worst / exact_budget, max(0.0, drops) / monotone_budget if monotone_budget > 0 else 0.0)

    rows = _chain_rows(ctx, mu, results, pots)
    for t, row in enumerate(rows):
        row["distance_to_final"] = to_final[t]
    notes = [
        f"exact residual {exact_worst:.3e} (budget {exact_budget:.3e})",
        f"potential drop {max(0.0, drops):.3e} (budget {monotone_budget:.3e})",
    ]
    return make_report(theorem_id, worst, 1.0, rows, notes, label=region.label)


def increasing_union_experiment(
    mu: DiscreteMeasure,
    chain: Sequence[Region],
    kernel: KernelSpec,
    probes: Any,
    tol: float = EXACT_TOLERANCE,
    tol_monotone: float = MONOTONE_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """Exhaustion where the target is the union of the chain itself."""
    if not chain:
        raise ValidationError("increasing union needs at least one region")
    union = region_union(chain, label="union")
    return exhaustion_experiment(
        mu, union, chain, kernel, probes, tol=tol, tol_monotone=tol_monotone, ctx=ctx, theorem_id="increasing-union"
    )


def decreasing_experiment(
    mu: DiscreteMeasure,
    chain: Sequence[Region],
    region: Region,
    kernel: KernelSpec,
    probes: Any,
    tol: float = EXACT_TOLERANCE,
    tol_monotone: float = MONOTONE_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """
    Sweeps onto a decreasing chain A_1 > A_2 > ... whose intersection is region.

    Probe potentials must not increase along the chain and the last sweep
    must match the direct sweep onto the region.
    """
    if not chain:
        raise ValidationError("decreasing chain needs at least one region")
    for t in range(len(chain) - 1):
        if not region_subset(chain[t + 1], chain[t]):
            raise ValidationError(f"chain element {t + 1} ({chain[t + 1].label}) is not contained in its predecessor")
    meet = region_intersection(chain)
    if not (meet == region) and not (region_subset(meet, region) and region_subset(region, meet)):
        raise ValidationError("intersection of the decreasing chain differs from the target region")

    ctx = measure_context(kernel, ctx=ctx)
    pts = as_points(probes, dim=region.dim)
    steps = list(chain)
    results, pots = _sweep_chain(mu, steps, kernel, pts, ctx)
    direct = sweep(mu, region, kernel, ctx=ctx)
    final_gap = energy_distance_squared(ctx, results[-1].swept, direct.swept) ** 0.5

    exact_budget = tol * (1.0 + energy(ctx, mu))
    monotone_budget = float(tol_monotone)
    rises = float(np.max(pots[1:] - pots[:-1])) if pots.shape[0] > 1 and pots.shape[1] else 0.0
    worst = max(final_gap / exact_budget, max(0.0, rises) / monotone_budget if monotone_budget > 0 else 0.0)

    rows = _chain_rows(ctx, mu, results, pots)
    notes = [
        f"final gap to direct sweep {final_gap:.3e} (budget {exact_budget:.3e})",
        f"potential rise {max(0.0, rises):.3e} (budget {monotone_budget:.3e})",
    ]
    return make_report("decreasing", worst, 1.0, rows, notes, label=region.label)


# ----------------------------------------------------------------------
# CLASSICAL REFERENCES AND PROFILES
# ----------------------------------------------------------------------

def classical_swept_mass(mu: DiscreteMeasure, center: Sequence[float], radius: float) -> float:
    """
    Newtonian swept mass onto a sphere (or ball): sum_j mu_j * min(1, r / |y_j - c|).
    """
    if radius <= 0.0:
        raise ValidationError("radius must be positive")
    if mu.size == 0:
        return 0.0
    c = np.asarray(center, dtype=float).reshape(-1)
    dist = np.linalg.norm(mu.points - c, axis=1)
    ratio = np.where(dist > 0.0, float(radius) / np.where(dist > 0.0, dist, 1.0), 1.0)
    return float(mu.weights @ np.minimum(1.0, ratio))


def potential_profile(
    result: SweepResult,
    directions: Sequence[Sequence[float]],
    radii: Sequence[float],
    center: Optional[Sequence[float]] = None,
    ctx: Optional[EnergyContext] = None,
) -> pd.DataFrame:
    """Source and swept potentials along rays from center."""
    ctx = measure_context(result.kernel, ctx=ctx)
    pts = ray_points(directions, radii, center)
    src = potential(ctx, result.source, pts)
    swp = potential(ctx, result.swept, pts)
    n_r = len(radii)
    rows = []
    for k, p in enumerate(pts):
        rows.append(
            {
                "ray": k // n_r,
                "radius": float(radii[k % n_r]),
                "x": float(p[0]),
                "y": float(p[1]),
                "z": float(p[2]) if p.shape[0] > 2 else 0.0,
                "source_potential": float(src[k]),
                "swept_potential": float(swp[k]),
                "difference": float(swp[k] - src[k]),
            }
        )
    return pd.DataFrame(rows)
