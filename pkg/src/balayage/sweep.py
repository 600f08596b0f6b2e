# src/balayage/sweep.py
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from src.shared.core_types import DiscreteMeasure, Region, SweepResult, make_measure, zero_measure
from src.shared.energy import EnergyContext, energy_distance, energy_norm, measure_context
from src.shared.errors import ValidationError
from src.shared.kernels import KernelSpec
from src.solvers.cone_qp import DEFAULT_TOLERANCE, ProjectionProblem, project_detailed

logger = logging.getLogger(__name__)

# weights below this fraction of the largest swept weight do not count as support
SUPPORT_CUTOFF = 1e-10


def sweep(
    mu: DiscreteMeasure,
    region: Region,
    kernel: KernelSpec,
    tol: float = DEFAULT_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
    mass_cap: Optional[float] = None,
) -> SweepResult:
    """
    Balayage of mu onto region: energy projection onto positive measures on the region.

    The certificate records the potential gap on the swept support
    (relative to 1 + source potential) and the worst shortfall of the
    swept potential below the source potential on the region.
    """
    if mu.size and mu.dim != region.dim:
        raise ValidationError(f"measure of dimension {mu.dim} swept onto a region of dimension {region.dim}")
    ctx = measure_context(kernel, ctx=ctx)
    source_mass = mu.total_mass

    if region.is_empty():
        return SweepResult(
            swept=zero_measure(region.dim),
            energy_distance=energy_norm(ctx, mu),
            kkt_stationarity=0.0,
            kkt_complementarity=0.0,
            source_mass=source_mass,
            swept_mass=0.0,
            mass_cap_active=False,
            iterations=0,
            source=mu,
            region=region,
            kernel=kernel,
            tolerance=tol,
        )

    problem = ProjectionProblem(source=mu, region=region, kernel=kernel, mass_cap=mass_cap, tolerance=tol)
    outcome = project_detailed(problem, ctx)
    w = outcome.weights
    swept = make_measure(region.points, w, dim=region.dim)

    b = outcome.b
    swept_pot = ctx.gram(region.points) @ w if np.any(w > 0.0) else np.zeros(region.size)
    on = w > SUPPORT_CUTOFF * float(np.max(w))
    eq_res = float(np.max(np.abs(swept_pot[on] - b[on]) / (1.0 + b[on]))) if np.any(on) else 0.0
    ineq_res = float(np.max(np.maximum(0.0, b - swept_pot))) if b.size else 0.0

    cert = outcome.certificate
    result = SweepResult(
        swept=swept,
        energy_distance=energy_distance(ctx, mu, swept),
        kkt_stationarity=cert.stationarity_residual,
        kkt_complementarity=cert.complementarity,
        source_mass=source_mass,
        swept_mass=swept.total_mass,
        mass_cap_active=bool(outcome.stats.cap_active),
        iterations=outcome.stats.iterations,
        source=mu,
        region=region,
        kernel=kernel,
        kkt_dual_feasibility=cert.dual_feasibility,
        multiplier=cert.multiplier,
        support_equality_residual=eq_res,
        region_inequality_residual=ineq_res,
        tolerance=cert.tolerance,
    )
    logger.info(
        "swept onto %s: mass %.6g -> %.6g, distance %.3e",
        region.label or "region",
        source_mass,
        result.swept_mass,
        result.energy_distance,
    )
    return result


def sweep_truncated(
    mu: DiscreteMeasure,
    region: Region,
    kernel: KernelSpec,
    q_factor: float = 1.0,
    tol: float = DEFAULT_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> SweepResult:
    """Sweep over the truncated cone {nu on region : nu(X) <= q_factor * mu(X)}."""
    if not (q_factor >= 1.0):
        raise ValidationError(f"q_factor must be >= 1, got {q_factor}")
    result = sweep(mu, region, kernel, tol=tol, ctx=ctx, mass_cap=float(q_factor) * mu.total_mass)
    if result.mass_cap_active and result.multiplier > result.tolerance:
        logger.warning(
            "mass cap %.6g binds on %s (multiplier %.3e): domination fails for this kernel regularization",
            float(q_factor) * mu.total_mass,
            region.label or "region",
            result.multiplier,
        )
    return result
