# src/shared/grids.py
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from src.shared.core_types import DiscreteMeasure, Region, as_points, make_measure, make_region
from src.shared.errors import ValidationError

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def _center(center: Optional[Sequence[float]], dim: int) -> np.ndarray:
    if center is None:
        return np.zeros(dim)
    c = np.asarray(center, dtype=float).reshape(-1)
    if c.shape[0] != dim:
        raise ValidationError(f"center has {c.shape[0]} coordinates, expected {dim}")
    return c


def _positive(name: str, value: float) -> float:
    if not (float(value) > 0.0) or not math.isfinite(float(value)):
        raise ValidationError(f"{name} must be positive, got {value}")
    return float(value)


# ----------------------------------------------------------------------
# POINT CLOUDS
# ----------------------------------------------------------------------

def fibonacci_sphere(count: int, radius: float = 1.0, center: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    Near-uniform deterministic lattice of `count` points on a 2-sphere in R^3.

    Heights are cell-centred in (-1, 1); longitudes advance by the golden angle.
    """
    if int(count) < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    r = _positive("radius", radius)
    n = int(count)
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = i * GOLDEN_ANGLE
    unit = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    return unit * r + _center(center, 3)


def lattice_box(lower: Sequence[float], upper: Sequence[float], spacing: float) -> np.ndarray:
    """Cubic lattice lower + k * spacing inside [lower, upper] (inclusive up to rounding)."""
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    if lo.shape != hi.shape:
        raise ValidationError("lower and upper must have the same length")
    if np.any(hi < lo):
        raise ValidationError("upper must be >= lower in every coordinate")
    s = _positive("spacing", spacing)
    axes = []
    for a, b in zip(lo, hi):
        steps = int(math.floor((b - a) / s + 1e-9))
        axes.append(a + s * np.arange(steps + 1, dtype=float))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh])


def ball_grid(radius: float, spacing: float, center: Optional[Sequence[float]] = None, dim: int = 3) -> np.ndarray:
    """Lattice points of spacing `spacing` (through the centre) inside the closed ball."""
    r = _positive("radius", radius)
    s = _positive("spacing", spacing)
    c = _center(center, dim)
    k = int(math.floor(r / s + 1e-9))
    offsets = s * np.arange(-k, k + 1, dtype=float)
    mesh = np.meshgrid(*([offsets] * dim), indexing="ij")
    pts = np.column_stack([m.reshape(-1) for m in mesh])
    keep = np.sum(pts * pts, axis=1) <= r * r * (1.0 + 1e-12)
    return pts[keep] + c


def uniform_box(lower: Sequence[float], upper: Sequence[float], count: int, rng: np.random.Generator) -> np.ndarray:
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValidationError("uniform box needs lower < upper in every coordinate")
    if int(count) < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    return lo + (hi - lo) * rng.random((int(count), lo.shape[0]))


def shell_cloud(
    count: int,
    r_min: float,
    r_max: float,
    rng: np.random.Generator,
    center: Optional[Sequence[float]] = None,
    dim: int = 3,
) -> np.ndarray:
    """Random points with isotropic directions and radii uniform in [r_min, r_max]."""
    if int(count) < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    if not (0.0 <= float(r_min) <= float(r_max)):
        raise ValidationError("shell cloud needs 0 <= r_min <= r_max")
    g = rng.standard_normal((int(count), dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = float(r_min) + (float(r_max) - float(r_min)) * rng.random(int(count))
    return g * radii[:, None] + _center(center, dim)


def ray_points(
    directions: Sequence[Sequence[float]],
    radii: Sequence[float],
    center: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Points center + t * d / |d| for every direction d and every radius t (direction-major)."""
    dirs = as_points(directions)
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError("ray directions must be non-zero")
    unit = dirs / norms[:, None]
    t = np.asarray(radii, dtype=float).reshape(-1)
    c = _center(center, dirs.shape[1])
    return (unit[:, None, :] * t[None, :, None]).reshape(-1, dirs.shape[1]) + c


# ----------------------------------------------------------------------
# MEASURES AND REGIONS
# ----------------------------------------------------------------------

def sphere_region(count: int, radius: float = 1.0, center: Optional[Sequence[float]] = None, label: str = "") -> Region:
    return make_region(fibonacci_sphere(count, radius, center), label=label or f"sphere-{count}")


def shell_measure(count: int, radius: float, mass: float = 1.0, center: Optional[Sequence[float]] = None) -> DiscreteMeasure:
    """Equal-weight discretization of a uniform spherical shell of total mass `mass`."""
    if float(mass) < 0.0:
        raise ValidationError("mass must be >= 0")
    pts = fibonacci_sphere(count, radius, center)
    return make_measure(pts, np.full(pts.shape[0], float(mass) / pts.shape[0]))


def uniform_box_measure(
    lower: Sequence[float],
    upper: Sequence[float],
    count: int,
    mass: float,
    rng: np.random.Generator,
) -> DiscreteMeasure:
    pts = uniform_box(lower, upper, count, rng)
    return make_measure(pts, np.full(pts.shape[0], float(mass) / pts.shape[0]))


def on_region_measure(region: Region, mass: float, fraction: float, rng: np.random.Generator) -> DiscreteMeasure:
    """Equal weights on a random fraction of the region's points (at least one)."""
    if region.is_empty():
        raise ValidationError("cannot place a measure on an empty region")
    if not (0.0 < float(fraction) <= 1.0):
        raise ValidationError(f"fraction must lie in (0, 1], got {fraction}")
    k = max(1, int(round(float(fraction) * region.size)))
    idx = np.sort(rng.choice(region.size, size=k, replace=False))
    return make_measure(region.points[idx], np.full(k, float(mass) / k), dim=region.dim)
