# src/runner/scenario_config.py
from __future__ import annotations

import hashlib
import json
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Coords = List[float]


# ----------------------------------------------------------------------
# KERNEL
# ----------------------------------------------------------------------

class KernelConfig(_Strict):
    alpha: float = Field(2.0, gt=0.0, le=2.0)
    dim: int = Field(3, ge=3)
    # None: epsilon = epsilon_factor * grid spacing of the region
    epsilon: Optional[float] = Field(None, ge=0.0)
    epsilon_factor: float = Field(0.5, gt=0.0)


# ----------------------------------------------------------------------
# REGIONS
# ----------------------------------------------------------------------

class SphereGrid(_Strict):
    kind: Literal["sphere-grid"]
    radius: float = Field(1.0, gt=0.0)
    count: int = Field(..., ge=1)
    center: Optional[Coords] = None


class BallGrid(_Strict):
    kind: Literal["ball-grid"]
    radius: float = Field(1.0, gt=0.0)
    spacing: float = Field(..., gt=0.0)
    center: Optional[Coords] = None


class BoxGrid(_Strict):
    kind: Literal["box-grid"]
    lower: Coords
    upper: Coords
    spacing: float = Field(..., gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> "BoxGrid":
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have the same length")
        if any(b < a for a, b in zip(self.lower, self.upper)):
            raise ValueError("upper must be >= lower in every coordinate")
        return self


class ExplicitPoints(_Strict):
    kind: Literal["explicit"]
    points: List[Coords] = Field(..., min_length=1)


RegionSpec = Annotated[Union[SphereGrid, BallGrid, BoxGrid, ExplicitPoints], Field(discriminator="kind")]


# ----------------------------------------------------------------------
# SOURCES
# ----------------------------------------------------------------------

class ShellSource(_Strict):
    kind: Literal["shell"]
    radius: float = Field(..., gt=0.0)
    mass: float = Field(1.0, ge=0.0)
    count: int = Field(..., ge=1)
    center: Optional[Coords] = None


class AtomsSource(_Strict):
    kind: Literal["atoms"]
    points: List[Coords] = Field(..., min_length=1)
    weights: List[float]

    @model_validator(mode="after")
    def _lengths(self) -> "AtomsSource":
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights must have the same length")
        if any(w < 0.0 for w in self.weights):
            raise ValueError("weights must be >= 0")
        return self


class UniformBoxSource(_Strict):
    kind: Literal["uniform-box"]
    lower: Coords
    upper: Coords
    count: int = Field(..., ge=1)
    mass: float = Field(1.0, ge=0.0)


class OnRegionSource(_Strict):
    kind: Literal["on-region"]
    mass: float = Field(1.0, ge=0.0)
    fraction: float = Field(1.0, gt=0.0, le=1.0)


SourceSpec = Annotated[
    Union[ShellSource, AtomsSource, UniformBoxSource, OnRegionSource], Field(discriminator="kind")
]


# ----------------------------------------------------------------------
# PROBES
# ----------------------------------------------------------------------

class ExteriorCloud(_Strict):
    count: int = Field(..., ge=1)
    r_min: float = Field(..., ge=0.0)
    r_max: float = Field(..., ge=0.0)
    center: Optional[Coords] = None


class Rays(_Strict):
    directions: List[Coords] = Field(..., min_length=1)
    radii: List[float] = Field(
        default_factory=lambda: [0.0, 0.25, 0.5, 1.25, 1.5, 1.75, 2.5, 3.0], min_length=1
    )
    center: Optional[Coords] = None


class ProbeConfig(_Strict):
    include_region: bool = True
    include_source: bool = True
    exterior: Optional[ExteriorCloud] = None
    points: List[Coords] = Field(default_factory=list)
    rays: Optional[Rays] = None


# ----------------------------------------------------------------------
# EXPERIMENTS
# ----------------------------------------------------------------------

class SubregionSelector(_Strict):
    kind: Literal["hemisphere", "random-subset", "single-point"]
    axis: int = Field(2, ge=0)
    fraction: float = Field(0.5, gt=0.0, le=1.0)
    index: int = Field(0, ge=0)


class _Experiment(_Strict):
    name: Optional[str] = None
    tolerance: Optional[float] = Field(None, gt=0.0)


class SweepExperiment(_Experiment):
    kind: Literal["sweep"]


class DominationExperiment(_Experiment):
    kind: Literal["domination"]


class MassExperiment(_Experiment):
    kind: Literal["mass"]


class EquilibriumExperiment(_Experiment):
    kind: Literal["equilibrium"]


class FrostmanExperiment(_Experiment):
    kind: Literal["frostman"]


class MonotonicityExperiment(_Experiment):
    kind: Literal["monotonicity"]
    subregion: SubregionSelector


class RestExperiment(_Experiment):
    kind: Literal["rest"]
    subregion: SubregionSelector


class TruncatedExperiment(_Experiment):
    kind: Literal["truncated"]
    q_factor: float = Field(1.0, ge=1.0)


class ExhaustionExperiment(_Experiment):
    kind: Literal["exhaustion"]
    chain_sizes: List[int] = Field(..., min_length=1)
    chains: int = Field(1, ge=1)
    tolerance_monotone: Optional[float] = Field(None, gt=0.0)


class IncreasingUnionExperiment(_Experiment):
    kind: Literal["increasing-union"]
    chain_sizes: List[int] = Field(..., min_length=1)
    chains: int = Field(1, ge=1)
    tolerance_monotone: Optional[float] = Field(None, gt=0.0)


class DecreasingExperiment(_Experiment):
    kind: Literal["decreasing"]
    extra_shells: List[float] = Field(..., min_length=1)
    count: int = Field(..., ge=1)
    chains: int = Field(1, ge=1)
    tolerance_monotone: Optional[float] = Field(None, gt=0.0)


class EquilibriumExhaustionExperiment(_Experiment):
    kind: Literal["equilibrium-exhaustion"]
    chain_sizes: List[int] = Field(..., min_length=1)
    chains: int = Field(1, ge=1)


class UniquenessExperiment(_Experiment):
    kind: Literal["uniqueness"]


class MinimalPotentialExperiment(_Experiment):
    kind: Literal["minimal-potential"]
    samples: int = Field(20, ge=1)


class IdempotenceExperiment(_Experiment):
    kind: Literal["idempotence"]
    fraction: float = Field(0.5, gt=0.0, le=1.0)


class ProjectionIdentitiesExperiment(_Experiment):
    kind: Literal["projection-identities"]
    samples: int = Field(50, ge=1)


ExperimentSpec = Annotated[
    Union[
        SweepExperiment,
        DominationExperiment,
        MassExperiment,
        EquilibriumExperiment,
        FrostmanExperiment,
        MonotonicityExperiment,
        RestExperiment,
        TruncatedExperiment,
        ExhaustionExperiment,
        IncreasingUnionExperiment,
        DecreasingExperiment,
        EquilibriumExhaustionExperiment,
        UniquenessExperiment,
        MinimalPotentialExperiment,
        IdempotenceExperiment,
        ProjectionIdentitiesExperiment,
    ],
    Field(discriminator="kind"),
]


class ScenarioConfig(_Strict):
    name: str = Field(..., min_length=1, pattern=r"^[A-Za-z0-9_.-]+$")
    description: str = ""
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    region: RegionSpec
    source: SourceSpec
    probes: ProbeConfig = Field(default_factory=ProbeConfig)
    experiments: List[ExperimentSpec] = Field(..., min_length=1)
    seed: int = 0
    output_dir: Optional[str] = None

    def experiment_names(self) -> List[str]:
        """Unique, declaration-ordered names (kind, kind-2, ... when unnamed)."""
        seen: dict = {}
        names: List[str] = []
        for exp in self.experiments:
            base = exp.name or exp.kind
            seen[base] = seen.get(base, 0) + 1
            names.append(base if seen[base] == 1 else f"{base}-{seen[base]}")
        return names

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()
