# src/runner/scenario_builder.py
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.balayage.sweep import sweep
from src.runner.scenario_config import (
    AtomsSource,
    BallGrid,
    BoxGrid,
    ExplicitPoints,
    OnRegionSource,
    ScenarioConfig,
    ShellSource,
    SphereGrid,
    UniformBoxSource,
)
from src.shared.core_types import (
    DiscreteMeasure,
    EquilibriumResult,
    Region,
    SweepResult,
    as_points,
    make_measure,
    make_region,
    zero_measure,
)
from src.shared.energy import EnergyContext
from src.shared.errors import ConfigError, KernelError, ValidationError
from src.shared.grids import (
    ball_grid,
    fibonacci_sphere,
    lattice_box,
    on_region_measure,
    ray_points,
    shell_cloud,
    shell_measure,
    uniform_box_measure,
)
from src.shared.kernels import KernelSpec, grid_spacing
from src.solvers.equilibrium import equilibrium_measure

# independent rng streams per generated quantity
SOURCE_STREAM = 1
PROBE_STREAM = 2


@dataclass
class Scenario:
    """
    A scenario config turned into arrays: kernel, region, source and probes.

    The base sweep and the region's equilibrium measure are computed once
    and shared by every experiment that needs them.
    """
    config: ScenarioConfig
    kernel: KernelSpec
    region: Region
    source: DiscreteMeasure
    probes: np.ndarray
    grid_spacing: Optional[float]
    ctx: EnergyContext
    tol_scale: float = 1.0
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    ray_points: Optional[np.ndarray] = None

    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _sweep: Optional[SweepResult] = field(default=None, repr=False)
    _equilibrium: Optional[EquilibriumResult] = field(default=None, repr=False)

    @property
    def name(self) -> str:
        return self.config.name

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([int(self.config.seed), int(stream)])

    def base_sweep(self) -> SweepResult:
        with self._lock:
            if self._sweep is None:
                self._sweep = sweep(self.source, self.region, self.kernel, ctx=self.ctx)
            return self._sweep

    def equilibrium(self) -> EquilibriumResult:
        with self._lock:
            if self._equilibrium is None:
                self._equilibrium = equilibrium_measure(self.region, self.kernel, ctx=self.ctx)
            return self._equilibrium

    def has_classical_reference(self) -> bool:
        """Closed-form Newtonian values exist for sphere and ball regions in R^3."""
        return self.radius is not None and self.kernel.is_newtonian and self.kernel.dim == 3


def build_scenario(
    config: ScenarioConfig,
    n_jobs: int = 1,
    tol_scale: float = 1.0,
    count: Optional[int] = None,
) -> Scenario:
    """
    Build the arrays of a scenario.

    count overrides the point count of a sphere-grid region (refinement
    studies). Bad values that pass the schema but not the generators are
    reported as ConfigError.
    """
    kcfg = config.kernel
    try:
        region, center, radius = _build_region(config, count)
        if region.dim != kcfg.dim:
            raise ConfigError(
                f"region has dimension {region.dim} but kernel.dim is {kcfg.dim}", path="kernel.dim"
            )
        h = grid_spacing(region.points) if region.size >= 2 else None
        if kcfg.epsilon is not None:
            epsilon = float(kcfg.epsilon)
        elif h is not None:
            epsilon = float(kcfg.epsilon_factor) * h
        else:
            raise ConfigError("single-point region: kernel.epsilon must be given explicitly", path="kernel.epsilon")
        kernel = KernelSpec(alpha=kcfg.alpha, dim=kcfg.dim, epsilon=epsilon)
        ctx = EnergyContext(kernel, n_jobs=n_jobs)
        scenario = Scenario(
            config=config,
            kernel=kernel,
            region=region,
            source=zero_measure(kcfg.dim),
            probes=np.zeros((0, kcfg.dim)),
            grid_spacing=h,
            ctx=ctx,
            tol_scale=float(tol_scale),
            center=center,
            radius=radius,
        )
        scenario.source = _build_source(config, scenario)
        scenario.probes, scenario.ray_points = _build_probes(config, scenario)
        return scenario
    except (ValidationError, KernelError) as exc:
        raise ConfigError(f"{config.name}: {exc}") from exc


# ----------------------------------------------------------------------
# PIECES
# ----------------------------------------------------------------------

def _build_region(config: ScenarioConfig, count: Optional[int]):
    spec = config.region
    dim = config.kernel.dim
    if isinstance(spec, SphereGrid):
        n = int(count) if count is not None else spec.count
        center = np.asarray(spec.center if spec.center is not None else np.zeros(3), dtype=float)
        region = make_region(fibonacci_sphere(n, spec.radius, center), label=f"sphere-{n}")
        return region, center, float(spec.radius)
    if count is not None:
        raise ConfigError("grid levels are only supported for sphere-grid regions", path="region.kind")
    if isinstance(spec, BallGrid):
        center = np.asarray(spec.center if spec.center is not None else np.zeros(dim), dtype=float)
        pts = ball_grid(spec.radius, spec.spacing, center, dim=dim)
        return make_region(pts, label=f"ball-{pts.shape[0]}"), center, float(spec.radius)
    if isinstance(spec, BoxGrid):
        pts = lattice_box(spec.lower, spec.upper, spec.spacing)
        return make_region(pts, label=f"box-{pts.shape[0]}"), None, None
    if isinstance(spec, ExplicitPoints):
        return make_region(spec.points, label="explicit"), None, None
    raise ConfigError(f"unsupported region kind {spec.kind!r}", path="region.kind")


def _build_source(config: ScenarioConfig, scenario: Scenario) -> DiscreteMeasure:
    spec = config.source
    if isinstance(spec, ShellSource):
        if scenario.kernel.dim != 3:
            raise ConfigError("shell sources are generated in R^3 only", path="source.kind")
        return shell_measure(spec.count, spec.radius, spec.mass, spec.center)
    if isinstance(spec, AtomsSource):
        return make_measure(spec.points, spec.weights, dim=scenario.kernel.dim)
    if isinstance(spec, UniformBoxSource):
        return uniform_box_measure(spec.lower, spec.upper, spec.count, spec.mass, scenario.rng(SOURCE_STREAM))
    if isinstance(spec, OnRegionSource):
        return on_region_measure(scenario.region, spec.mass, spec.fraction, scenario.rng(SOURCE_STREAM))
    raise ConfigError(f"unsupported source kind {spec.kind!r}", path="source.kind")


def _build_probes(config: ScenarioConfig, scenario: Scenario):
    pcfg = config.probes
    dim = scenario.kernel.dim
    blocks: List[np.ndarray] = []
    if pcfg.include_region:
        blocks.append(scenario.region.points)
    if pcfg.include_source and scenario.source.size:
        blocks.append(scenario.source.points)
    if pcfg.exterior is not None:
        ext = pcfg.exterior
        center = ext.center if ext.center is not None else scenario.center
        blocks.append(shell_cloud(ext.count, ext.r_min, ext.r_max, scenario.rng(PROBE_STREAM), center, dim=dim))
    if pcfg.points:
        blocks.append(as_points(pcfg.points, dim=dim))
    rays = None
    if pcfg.rays is not None:
        center = pcfg.rays.center if pcfg.rays.center is not None else scenario.center
        # rays feed the potential profile table only
        rays = ray_points(pcfg.rays.directions, pcfg.rays.radii, center)
    probes = np.vstack(blocks) if blocks else np.zeros((0, dim))
    return probes, rays
