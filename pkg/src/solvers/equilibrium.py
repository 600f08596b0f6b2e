# src/solvers/equilibrium.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.shared.core_types import EquilibriumResult, Region, make_measure, region_subset, zero_measure
from src.shared.energy import EnergyContext, measure_context, potential
from src.shared.errors import ValidationError
from src.shared.kernels import KernelSpec, factor_gram
from src.shared.reports import TheoremReport, make_report
from src.solvers.cone_qp import DEFAULT_TOLERANCE, solve_nnls_core

logger = logging.getLogger(__name__)

METHODS = ("simplex", "inequality")
FROSTMAN_TOLERANCE = 1e-2


def _region_gram(ctx: EnergyContext, region: Region) -> np.ndarray:
    K = ctx.gram(region.points)
    factor = factor_gram(K)
    if factor.jitter > 0.0:
        K = K + factor.jitter * np.eye(region.size)
    return K


def _solver_tol(K: np.ndarray, tol: float) -> float:
    return float(tol) * (1.0 + float(np.max(np.diag(K))))


def _unit_mass_minimizer(K: np.ndarray, tol: float):
    m = K.shape[0]
    w, lam, stats = solve_nnls_core(
        K, np.zeros(m), mass_cap=1.0, tol=_solver_tol(K, tol), mass_equality=True
    )
    energy = float(w @ K @ w)
    return w, energy, stats


def equilibrium_measure(
    region: Region,
    kernel: KernelSpec,
    tol: float = DEFAULT_TOLERANCE,
    method: str = "simplex",
    ctx: Optional[EnergyContext] = None,
) -> EquilibriumResult:
    """
    Equilibrium measure of a finite region.

    simplex: minimize energy over unit-mass measures on the region and
    rescale by the reciprocal minimal energy. inequality: minimize
    1/2 w'Kw - sum(w) over w >= 0, whose minimizer already has potential
    >= 1 on the region with equality on its support.
    """
    if method not in METHODS:
        raise ValidationError(f"unknown equilibrium method {method!r}; expected one of {METHODS}")
    if region.dim != kernel.dim:
        raise ValidationError("region dimension does not match the kernel")
    if region.is_empty():
        return EquilibriumResult(
            gamma=zero_measure(region.dim),
            capacity=0.0,
            min_potential_on_region=0.0,
            max_potential_on_support=0.0,
            method=method,
            region_label=region.label,
        )

    ctx = measure_context(kernel, ctx=ctx)
    K = _region_gram(ctx, region)

    if method == "simplex":
        nu, energy, stats = _unit_mass_minimizer(K, tol)
        weights = nu / energy
        capacity = 1.0 / energy
    else:
        m = region.size
        weights, _, stats = solve_nnls_core(K, np.ones(m), tol=_solver_tol(K, tol))
        capacity = float(np.sum(weights))

    pot = K @ weights
    on = weights > 0.0
    gamma = make_measure(region.points, weights, dim=region.dim)
    return EquilibriumResult(
        gamma=gamma,
        capacity=float(capacity),
        min_potential_on_region=float(np.min(pot)),
        max_potential_on_support=float(np.max(pot[on])) if np.any(on) else 0.0,
        energy=float(weights @ K @ weights),
        iterations=stats.iterations,
        method=method,
        region_label=region.label,
    )


def capacity_via_unit_mass(
    region: Region,
    kernel: KernelSpec,
    tol: float = DEFAULT_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> float:
    """Reciprocal of the least energy among unit-mass measures on the region."""
    if region.is_empty():
        return 0.0
    ctx = measure_context(kernel, ctx=ctx)
    K = _region_gram(ctx, region)
    _, energy, _ = _unit_mass_minimizer(K, tol)
    return 1.0 / energy


def classical_capacity(radius: float, kernel: KernelSpec) -> float:
    """Newtonian capacity of a sphere or closed ball of the given radius in R^3 (equals the radius)."""
    if not kernel.is_newtonian or kernel.dim != 3:
        raise ValidationError("closed-form capacity is only available for the Newtonian kernel in R^3")
    if radius <= 0.0:
        raise ValidationError("radius must be positive")
    return float(radius)


# ----------------------------------------------------------------------
# CHECKS
# ----------------------------------------------------------------------

def check_equilibrium_identities(result: EquilibriumResult, tol: float = 1e-6) -> TheoremReport:
    """Capacity, total mass and squared norm agree; potential ~1 on the region and <= 1 on the support."""
    cap = result.capacity
    if cap == 0.0:
        return make_report("equilibrium-identities", 0.0, tol, label=result.region_label)
    rows = [
        {"quantity": "mass", "value": result.mass, "residual": abs(cap - result.mass) / cap},
        {"quantity": "energy", "value": result.energy, "residual": abs(cap - result.energy) / cap},
        {
            "quantity": "min_potential_on_region",
            "value": result.min_potential_on_region,
            "residual": max(0.0, 1.0 - result.min_potential_on_region),
        },
        {
            "quantity": "max_potential_on_support",
            "value": result.max_potential_on_support,
            "residual": max(0.0, result.max_potential_on_support - 1.0),
        },
    ]
    worst = max(r["residual"] for r in rows)
    return make_report("equilibrium-identities", worst, tol, rows, label=result.region_label)


def check_frostman(
    result: EquilibriumResult,
    kernel: KernelSpec,
    probes: Any,
    tol: float = FROSTMAN_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """Equilibrium potential stays below 1 + tol at every probe."""
    ctx = measure_context(kernel, ctx=ctx)
    pot = potential(ctx, result.gamma, probes)
    pts = np.asarray(probes, dtype=float)
    if pot.size == 0:
        return make_report("frostman", 0.0, tol, label=result.region_label)
    excess = pot - 1.0
    j = int(np.argmax(excess))
    worst = max(0.0, float(excess[j]))
    notes: List[str] = []
    if worst > tol:
        logger.warning(
            "equilibrium potential of %s reaches %.6f > 1 + %.1e (kernel regularization artifact)",
            result.region_label or "region",
            float(pot[j]),
            tol,
        )
        notes.append("potential above 1 off the support: kernel regularization artifact")
    details = [{"probe": j, "point": pts[j].tolist(), "potential": float(pot[j])}]
    return make_report("frostman", worst, tol, details, notes, label=result.region_label)


@dataclass(frozen=True)
class EquilibriumExhaustion:
    """Equilibrium potentials at fixed probes along a nested chain (last row: full region)."""
    sizes: List[int]
    capacities: List[float]
    potentials: np.ndarray
    labels: List[str] = field(default_factory=list)

    def rows(self) -> List[Dict[str, Any]]:
        out = []
        for t, (size, cap) in enumerate(zip(self.sizes, self.capacities)):
            row: Dict[str, Any] = {"step": t, "label": self.labels[t] if self.labels else "", "points": size, "capacity": cap}
            for j, v in enumerate(self.potentials[t]):
                row[f"probe_{j}"] = float(v)
            out.append(row)
        return out


def check_nested(chain: Sequence[Region], region: Region) -> None:
    for t in range(len(chain)):
        nxt = chain[t + 1] if t + 1 < len(chain) else region
        if not region_subset(chain[t], nxt):
            raise ValidationError(f"chain element {t} ({chain[t].label}) is not contained in its successor")


def equilibrium_exhaustion(
    region: Region,
    chain: Sequence[Region],
    kernel: KernelSpec,
    probes: Any,
    tol: float = DEFAULT_TOLERANCE,
    ctx: Optional[EnergyContext] = None,
) -> EquilibriumExhaustion:
    check_nested(chain, region)
    ctx = measure_context(kernel, ctx=ctx)
    steps = list(chain)
    if not steps or not (steps[-1] == region):
        steps.append(region)
    sizes: List[int] = []
    caps: List[float] = []
    pots: List[np.ndarray] = []
    for sub in steps:
        res = equilibrium_measure(sub, kernel, tol=tol, ctx=ctx)
        sizes.append(sub.size)
        caps.append(res.capacity)
        pots.append(potential(ctx, res.gamma, probes))
    return EquilibriumExhaustion(
        sizes=sizes,
        capacities=caps,
        potentials=np.vstack(pots) if pots else np.zeros((0, 0)),
        labels=[s.label for s in steps],
    )


def check_equilibrium_exhaustion(
    table: EquilibriumExhaustion,
    tol: float = 1e-7,
    label: str = "",
) -> TheoremReport:
    """Probe potentials and capacities nondecreasing along the chain."""
    pots = table.potentials
    worst = 0.0
    if pots.shape[0] > 1:
        drops = pots[:-1] - pots[1:]
        worst = max(worst, float(np.max(drops)))
        cap_drops = np.asarray(table.capacities[:-1]) - np.asarray(table.capacities[1:])
        worst = max(worst, float(np.max(cap_drops)))
    return make_report("equilibrium-exhaustion", max(0.0, worst), tol, table.rows(), label=label)


def check_capacity_routes(
    region: Region,
    kernel: KernelSpec,
    tol: float = 1e-6,
    ctx: Optional[EnergyContext] = None,
) -> TheoremReport:
    """Unit-mass route and inequality route give the same capacity."""
    ctx = measure_context(kernel, ctx=ctx)
    c_simplex = capacity_via_unit_mass(region, kernel, ctx=ctx)
    c_ineq = equilibrium_measure(region, kernel, method="inequality", ctx=ctx).capacity
    scale = max(c_simplex, c_ineq, 1e-300)
    residual = abs(c_simplex - c_ineq) / scale if scale > 1e-300 else 0.0
    rows = [{"route": "unit-mass", "capacity": c_simplex}, {"route": "inequality", "capacity": c_ineq}]
    return make_report("capacity-routes", residual, tol, rows, label=region.label)
