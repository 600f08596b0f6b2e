# src/shared/core_types.py
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.shared.errors import ValidationError

if TYPE_CHECKING:
    from src.shared.kernels import KernelSpec

MIN_DIM = 3

Point = Tuple[float, ...]


def as_points(points: Any, dim: Optional[int] = None) -> np.ndarray:
    """
    Coerce a sequence of points into a read-only float array of shape (N, n).

    Rules:
    - every point has the same length n, n >= 3
    - all coordinates finite
    - an empty sequence needs an explicit dim
    """
    arr = np.array(points, dtype=float)
    if arr.size == 0:
        if dim is None:
            raise ValidationError("cannot infer the dimension of an empty point set")
        arr = np.zeros((0, int(dim)), dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"points must be a 2-d table of coordinates, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != int(dim):
        raise ValidationError(f"dimension mismatch: expected {dim}, got {arr.shape[1]}")
    if arr.shape[1] < MIN_DIM:
        raise ValidationError(f"ambient dimension must be >= {MIN_DIM}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("point coordinates must be finite")
    arr.setflags(write=False)
    return arr


def point_key(row: np.ndarray) -> Point:
    return tuple(float(x) for x in row)


def points_key(points: np.ndarray) -> str:
    """Content key of a point table; equal tables always share a key."""
    arr = np.ascontiguousarray(points, dtype=float)
    h = hashlib.sha1()
    h.update(str(arr.shape).encode("utf-8"))
    h.update(arr.tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """
    Finite atomic positive measure on R^n.

    Atoms with zero weight are kept; the support is the set of
    positive-weight atoms.
    """
    points: np.ndarray
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def support_mask(self) -> np.ndarray:
        return self.weights > 0.0

    @property
    def key(self) -> str:
        return points_key(self.points)

    def is_zero(self) -> bool:
        return not bool(np.any(self.weights > 0.0))

    def scaled(self, factor: float) -> "DiscreteMeasure":
        if factor < 0:
            raise ValidationError("measures can only be scaled by a non-negative factor")
        return make_measure(self.points, self.weights * float(factor))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and bool(np.array_equal(self.points, other.points))
            and bool(np.array_equal(self.weights, other.weights))
        )

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }


@dataclass(frozen=True, eq=False)
class Region:
    """
    Finite point cloud A onto which measures are swept.

    Point identity is exact coordinate equality, so nested regions built
    from a shared grid compare exactly.
    """
    points: np.ndarray
    label: str = ""
    _index: Dict[Point, int] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        index = {point_key(row): i for i, row in enumerate(self.points)}
        object.__setattr__(self, "_index", index)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def key(self) -> str:
        return points_key(self.points)

    def is_empty(self) -> bool:
        return self.size == 0

    def contains(self, point: Sequence[float]) -> bool:
        return point_key(np.asarray(point, dtype=float)) in self._index

    def index_of(self, point: Sequence[float]) -> Optional[int]:
        return self._index.get(point_key(np.asarray(point, dtype=float)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Region):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.array_equal(self.points, other.points))

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> Dict[str, Any]:
        return {"points": self.points.tolist(), "label": self.label}


@dataclass(frozen=True)
class SweepResult:
    """
    Swept measure plus its numerical certificate.

    swept lives on region.points (one weight per region point, zeros kept).
    """
    swept: DiscreteMeasure
    energy_distance: float
    kkt_stationarity: float
    kkt_complementarity: float
    source_mass: float
    swept_mass: float
    mass_cap_active: bool
    iterations: int
    # context needed by the theorem checks
    source: DiscreteMeasure = field(compare=False, repr=False, default=None)  # type: ignore[assignment]
    region: Region = field(compare=False, repr=False, default=None)  # type: ignore[assignment]
    kernel: Optional["KernelSpec"] = field(compare=False, repr=False, default=None)
    kkt_dual_feasibility: float = 0.0
    multiplier: float = 0.0
    support_equality_residual: float = 0.0
    region_inequality_residual: float = 0.0
    tolerance: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "region": self.region.label if self.region is not None else "",
            "swept": self.swept.to_dict(),
            "energy_distance": self.energy_distance,
            "kkt_stationarity": self.kkt_stationarity,
            "kkt_dual_feasibility": self.kkt_dual_feasibility,
            "kkt_complementarity": self.kkt_complementarity,
            "multiplier": self.multiplier,
            "support_equality_residual": self.support_equality_residual,
            "region_inequality_residual": self.region_inequality_residual,
            "source_mass": self.source_mass,
            "swept_mass": self.swept_mass,
            "mass_cap_active": self.mass_cap_active,
            "iterations": self.iterations,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True)
class EquilibriumResult:
    gamma: DiscreteMeasure
    capacity: float
    min_potential_on_region: float
    max_potential_on_support: float
    energy: float = 0.0
    iterations: int = 0
    method: str = "simplex"
    region_label: str = ""

    @property
    def mass(self) -> float:
        return self.gamma.total_mass

    def to_dict(self) -> Dict[str, Any]:
        return {
            "region": self.region_label,
            "method": self.method,
            "capacity": self.capacity,
            "mass": self.mass,
            "energy": self.energy,
            "min_potential_on_region": self.min_potential_on_region,
            "max_potential_on_support": self.max_potential_on_support,
            "iterations": self.iterations,
        }


# ----------------------------------------------------------------------
# CONSTRUCTORS
# ----------------------------------------------------------------------

def make_measure(points: Any, weights: Any, dim: Optional[int] = None) -> DiscreteMeasure:
    """
    Build a DiscreteMeasure, merging duplicate points by summing weights.

    Zero-weight atoms are retained. First occurrence fixes atom order.
    """
    pts = as_points(points, dim=dim)
    w = np.array(weights, dtype=float).reshape(-1)
    if w.shape[0] != pts.shape[0]:
        raise ValidationError(f"{pts.shape[0]} points but {w.shape[0]} weights")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite")
    if np.any(w < 0.0):
        raise ValidationError("weights must be non-negative")

    order: Dict[Point, int] = {}
    merged: List[float] = []
    rows: List[np.ndarray] = []
    for row, wi in zip(pts, w):
        k = point_key(row)
        slot = order.get(k)
        if slot is None:
            order[k] = len(merged)
            merged.append(float(wi))
            rows.append(row)
        else:
            merged[slot] += float(wi)

    if len(rows) == pts.shape[0]:
        out_pts = pts
        out_w = w.copy()
    else:
        out_pts = as_points(np.vstack(rows), dim=pts.shape[1])
        out_w = np.array(merged, dtype=float)
    out_w.setflags(write=False)
    return DiscreteMeasure(points=out_pts, weights=out_w)


def zero_measure(dim: int) -> DiscreteMeasure:
    return make_measure(np.zeros((0, dim)), np.zeros(0), dim=dim)


def make_region(points: Any, label: str = "", dim: Optional[int] = None) -> Region:
    """Build a non-empty Region; repeated points collapse onto their first occurrence."""
    pts = as_points(points, dim=dim)
    if pts.shape[0] == 0:
        raise ValidationError("a region needs at least one point (use empty_region for the empty set)")
    seen: Dict[Point, int] = {}
    keep: List[int] = []
    for i, row in enumerate(pts):
        k = point_key(row)
        if k not in seen:
            seen[k] = i
            keep.append(i)
    if len(keep) != pts.shape[0]:
        pts = as_points(pts[keep], dim=pts.shape[1])
    return Region(points=pts, label=str(label))


def empty_region(dim: int, label: str = "empty") -> Region:
    return Region(points=as_points(np.zeros((0, dim)), dim=dim), label=label)


def measure_from_dict(data: Dict[str, Any], dim: Optional[int] = None) -> DiscreteMeasure:
    if "points" not in data or "weights" not in data:
        raise ValidationError("measure payload needs 'points' and 'weights'")
    return make_measure(data["points"], data["weights"], dim=dim)


def region_from_dict(data: Dict[str, Any], dim: Optional[int] = None) -> Region:
    if "points" not in data:
        raise ValidationError("region payload needs 'points'")
    label = str(data.get("label", ""))
    if len(data["points"]) == 0:
        if dim is None:
            raise ValidationError("an empty region payload needs an explicit dimension")
        return empty_region(dim, label=label)
    return make_region(data["points"], label=label, dim=dim)


# ----------------------------------------------------------------------
# SET ALGEBRA
# ----------------------------------------------------------------------

def region_subset(b: Region, q: Region) -> bool:
    """True iff every point of b occurs in q (exact coordinate equality)."""
    if b.dim != q.dim:
        raise ValidationError(f"dimension mismatch: {b.dim} vs {q.dim}")
    return all(point_key(row) in q._index for row in b.points)


def region_select(region: Region, indices: Iterable[int], label: str = "") -> Region:
    idx = sorted(set(int(i) for i in indices))
    if not idx:
        return empty_region(region.dim, label=label or "empty")
    if idx[0] < 0 or idx[-1] >= region.size:
        raise ValidationError("region_select index out of range")
    return Region(points=as_points(region.points[idx], dim=region.dim), label=label or region.label)


def region_union(regions: Sequence[Region], label: str = "") -> Region:
    if not regions:
        raise ValidationError("region_union needs at least one region")
    dim = regions[0].dim
    if any(r.dim != dim for r in regions):
        raise ValidationError("region_union: dimension mismatch")
    stacked = [r.points for r in regions if r.size]
    if not stacked:
        return empty_region(dim, label=label or "empty")
    return make_region(np.vstack(stacked), label=label, dim=dim)


def region_intersection(regions: Sequence[Region], label: str = "") -> Region:
    if not regions:
        raise ValidationError("region_intersection needs at least one region")
    base = regions[0]
    if any(r.dim != base.dim for r in regions):
        raise ValidationError("region_intersection: dimension mismatch")
    keep = [i for i, row in enumerate(base.points) if all(point_key(row) in r._index for r in regions[1:])]
    return region_select(base, keep, label=label or base.label)


def restrict_to_region(mu: DiscreteMeasure, region: Region) -> DiscreteMeasure:
    """Weights of mu laid out on region.points (zero where mu has no atom)."""
    if mu.dim != region.dim:
        raise ValidationError(f"dimension mismatch: {mu.dim} vs {region.dim}")
    w = np.zeros(region.size, dtype=float)
    for row, wi in zip(mu.points, mu.weights):
        i = region._index.get(point_key(row))
        if i is None:
            if wi > 0.0:
                raise ValidationError("measure has an atom outside the region")
            continue
        w[i] += wi
    return make_measure(region.points, w, dim=region.dim)
