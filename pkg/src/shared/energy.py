# src/shared/energy.py
from __future__ import annotations

import logging
import math
import threading
from collections import OrderedDict
from typing import Any, Optional, Tuple

import numpy as np

from src.shared.core_types import DiscreteMeasure, as_points, point_key, points_key
from src.shared.errors import NumericalConsistencyError, ValidationError
from src.shared.kernels import KernelSpec, assemble_gram

logger = logging.getLogger(__name__)

# relative guard for a negative energy-distance radicand
RADICAND_GUARD = 1e-12


class EnergyContext:
    """
    Energy inner product of one kernel, with a cache of kernel tables.

    Cached blocks are keyed by the content hash of their row and column point
    sets. Two workers filling the same block produce identical arrays, so
    the last write wins.
    """

    def __init__(self, kernel: KernelSpec, n_jobs: int = 1, cache_limit: int = 64) -> None:
        self.kernel = kernel
        self.n_jobs = max(1, int(n_jobs))
        self._cache_limit = max(0, int(cache_limit))
        self._lock = threading.Lock()
        self._cache: "OrderedDict[Tuple[str, str], np.ndarray]" = OrderedDict()

    # ------------------------------------------------------------------
    # PUBLIC API
    # ------------------------------------------------------------------

    def gram(self, rows: Any, cols: Any = None) -> np.ndarray:
        """Kernel table between two point sets (read-only, possibly shared)."""
        r = as_points(rows, dim=self.kernel.dim)
        c = r if cols is None else as_points(cols, dim=self.kernel.dim)
        key = (points_key(r), points_key(c))

        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit

        block = assemble_gram(self.kernel, r, None if key[0] == key[1] else c, n_jobs=self.n_jobs)
        block.setflags(write=False)

        if self._cache_limit:
            with self._lock:
                self._cache[key] = block
                while len(self._cache) > self._cache_limit:
                    self._cache.popitem(last=False)
        return block

    def cache_size(self) -> int:
        with self._lock:
            return len(self._cache)

    def clear(self) -> None:
        with self._lock:
            self._cache.clear()

    def _check(self, mu: DiscreteMeasure) -> None:
        if mu.size and mu.dim != self.kernel.dim:
            raise ValidationError(f"measure of dimension {mu.dim} used with a kernel of dimension {self.kernel.dim}")


def _support(mu: DiscreteMeasure) -> Tuple[np.ndarray, np.ndarray]:
    mask = mu.weights > 0.0
    return mu.points[mask], mu.weights[mask]


# ----------------------------------------------------------------------
# POTENTIALS AND ENERGIES
# ----------------------------------------------------------------------

def potential(ctx: EnergyContext, mu: DiscreteMeasure, probes: Any) -> np.ndarray:
    """Potential of mu at every probe point."""
    ctx._check(mu)
    pr = as_points(probes, dim=ctx.kernel.dim)
    pts, w = _support(mu)
    if pts.shape[0] == 0 or pr.shape[0] == 0:
        return np.zeros(pr.shape[0], dtype=float)
    return ctx.gram(pr, pts) @ w


def mutual_energy(ctx: EnergyContext, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    ctx._check(mu)
    ctx._check(nu)
    p1, w1 = _support(mu)
    p2, w2 = _support(nu)
    if p1.shape[0] == 0 or p2.shape[0] == 0:
        return 0.0
    if p1.shape == p2.shape and np.array_equal(p1, p2):
        return float(w1 @ ctx.gram(p1) @ w2)
    return float(w1 @ ctx.gram(p1, p2) @ w2)


def energy(ctx: EnergyContext, mu: DiscreteMeasure) -> float:
    """Squared energy norm of mu."""
    return mutual_energy(ctx, mu, mu)


def energy_norm(ctx: EnergyContext, mu: DiscreteMeasure) -> float:
    return math.sqrt(max(energy(ctx, mu), 0.0))


def union_coefficients(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Tuple[np.ndarray, np.ndarray]:
    """
    Support union of mu and nu with the coefficient vector of mu - nu on it.

    Order: support of mu first, then the atoms of nu not in mu.
    """
    p1, w1 = _support(mu)
    p2, w2 = _support(nu)
    dim = mu.dim if mu.size else nu.dim
    slots = {point_key(row): i for i, row in enumerate(p1)}
    extra_rows = []
    coeff = list(w1)
    for row, wi in zip(p2, w2):
        k = point_key(row)
        slot = slots.get(k)
        if slot is None:
            slots[k] = len(coeff)
            coeff.append(-float(wi))
            extra_rows.append(row)
        else:
            coeff[slot] -= float(wi)
    if extra_rows:
        pts = np.vstack([p1, np.vstack(extra_rows)]) if p1.shape[0] else np.vstack(extra_rows)
    else:
        pts = p1
    return as_points(pts, dim=dim), np.asarray(coeff, dtype=float)


def energy_distance_squared(ctx: EnergyContext, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """
    Squared energy distance of two positive measures.

    Expanded on the union of supports, so the cancellation between close
    measures happens in the coefficients rather than in the energies.
    """
    ctx._check(mu)
    ctx._check(nu)
    pts, d = union_coefficients(mu, nu)
    if pts.shape[0] == 0:
        return 0.0
    radicand = float(d @ ctx.gram(pts) @ d)
    if radicand >= 0.0:
        return radicand
    scale = max(energy(ctx, mu), energy(ctx, nu))
    if radicand < -RADICAND_GUARD * scale:
        raise NumericalConsistencyError(
            f"negative squared energy distance {radicand:.3e} (norm scale {scale:.3e})"
        )
    return 0.0


def energy_distance(ctx: EnergyContext, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    return math.sqrt(energy_distance_squared(ctx, mu, nu))


def measure_context(kernel: KernelSpec, n_jobs: int = 1, ctx: Optional[EnergyContext] = None) -> EnergyContext:
    """Reuse ctx when it belongs to kernel, otherwise open a fresh one."""
    if ctx is not None and ctx.kernel == kernel:
        return ctx
    return EnergyContext(kernel, n_jobs=n_jobs)
