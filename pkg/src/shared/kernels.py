# src/shared/kernels.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import LinAlgError, cho_solve, cholesky
from scipy.spatial.distance import cdist
from sklearn.neighbors import NearestNeighbors

from src.shared.core_types import MIN_DIM, as_points
from src.shared.errors import FactorizationError, KernelError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_JITTER_LADDER: Tuple[float, ...] = (0.0, 1e-12, 1e-10, 1e-8)

# rows per worker block when assembling in parallel
ROW_BLOCK = 256


@dataclass(frozen=True)
class KernelSpec:
    """
    Regularized Riesz kernel (|x - y|^2 + epsilon^2)^((alpha - dim) / 2).

    alpha = 2 is the Newtonian kernel. epsilon = 0 gives the plain Riesz
    kernel, which is infinite on the diagonal.
    """
    alpha: float
    dim: int
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < float(self.alpha) <= 2.0):
            raise ValidationError(f"alpha must lie in (0, 2], got {self.alpha}")
        if int(self.dim) != self.dim or int(self.dim) < MIN_DIM:
            raise ValidationError(f"dim must be an integer >= {MIN_DIM}, got {self.dim}")
        if not math.isfinite(float(self.epsilon)) or float(self.epsilon) < 0.0:
            raise ValidationError(f"epsilon must be finite and >= 0, got {self.epsilon}")

    @property
    def exponent(self) -> float:
        return (float(self.alpha) - float(self.dim)) / 2.0

    @property
    def is_newtonian(self) -> bool:
        return float(self.alpha) == 2.0

    @property
    def diagonal(self) -> float:
        """Kernel value at zero distance (inf when epsilon = 0)."""
        if self.epsilon == 0.0:
            return math.inf
        return float(self.epsilon**2) ** self.exponent

    def with_epsilon(self, epsilon: float) -> "KernelSpec":
        return KernelSpec(alpha=self.alpha, dim=self.dim, epsilon=float(epsilon))

    def to_dict(self) -> Dict[str, Any]:
        return {"alpha": float(self.alpha), "dim": int(self.dim), "epsilon": float(self.epsilon)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KernelSpec":
        try:
            return cls(alpha=float(data["alpha"]), dim=int(data["dim"]), epsilon=float(data.get("epsilon", 0.0)))
        except KeyError as exc:
            raise ValidationError(f"kernel payload missing {exc}") from exc


@dataclass(frozen=True)
class GramFactor:
    """Lower Cholesky factor of gram + jitter * I."""
    gram: np.ndarray
    lower: np.ndarray
    jitter: float
    jitter_ratio: float

    @property
    def size(self) -> int:
        return int(self.gram.shape[0])

    @property
    def min_pivot(self) -> float:
        if self.size == 0:
            return 0.0
        return float(np.min(np.diag(self.lower)) ** 2)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve((self.lower, True), np.asarray(rhs, dtype=float))


# ----------------------------------------------------------------------
# EVALUATION
# ----------------------------------------------------------------------

def eval_kernel(k: KernelSpec, x: Sequence[float], y: Sequence[float]) -> float:
    xa = np.asarray(x, dtype=float).reshape(-1)
    ya = np.asarray(y, dtype=float).reshape(-1)
    if xa.shape[0] != k.dim or ya.shape[0] != k.dim:
        raise ValidationError(f"kernel of dimension {k.dim} evaluated at points of length {xa.shape[0]}, {ya.shape[0]}")
    base = float(np.sum((xa - ya) ** 2)) + float(k.epsilon) ** 2
    if base == 0.0:
        return math.inf
    return base**k.exponent


def _block_values(k: KernelSpec, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    sq = cdist(rows, cols, metric="sqeuclidean")
    sq += float(k.epsilon) ** 2
    return np.power(sq, k.exponent)


def _check_finite_entries(k: KernelSpec, rows: np.ndarray, cols: np.ndarray) -> None:
    if k.epsilon > 0.0 or rows.shape[0] == 0 or cols.shape[0] == 0:
        return
    sq = cdist(rows, cols, metric="sqeuclidean")
    hits = np.argwhere(sq == 0.0)
    if hits.size:
        i, j = (int(v) for v in hits[0])
        raise KernelError(
            f"kernel entry ({i}, {j}) is infinite: points coincide and epsilon = 0; use epsilon > 0",
            row=i,
            col=j,
        )


def assemble_gram(k: KernelSpec, rows: Any, cols: Any = None, n_jobs: int = 1) -> np.ndarray:
    """
    Kernel table M[i, j] = kernel(rows[i], cols[j]).

    With cols omitted (or equal to rows) the table is exactly symmetric:
    the upper triangle is computed and mirrored.
    """
    r = as_points(rows, dim=k.dim)
    symmetric = cols is None
    c = r if symmetric else as_points(cols, dim=k.dim)
    if not symmetric and c.shape == r.shape and np.array_equal(c, r):
        symmetric = True
        c = r

    _check_finite_entries(k, r, c)

    n_rows = r.shape[0]
    if n_rows == 0 or c.shape[0] == 0:
        return np.zeros((n_rows, c.shape[0]), dtype=float)

    starts = list(range(0, n_rows, ROW_BLOCK))
    if n_jobs == 1 or len(starts) == 1:
        blocks = [_block_values(k, r[s : s + ROW_BLOCK], c) for s in starts]
    else:
        blocks = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_block_values)(k, r[s : s + ROW_BLOCK], c) for s in starts
        )
    out = np.vstack(blocks)

    if symmetric:
        upper = np.triu(out)
        out = upper + np.triu(upper, 1).T
    return out


# ----------------------------------------------------------------------
# FACTORIZATION
# ----------------------------------------------------------------------

def factor_gram(gram: Any, ladder: Sequence[float] = DEFAULT_JITTER_LADDER) -> GramFactor:
    """
    Cholesky with an escalating diagonal jitter delta * trace / size.

    A rung is accepted only when the smallest pivot clears both the jitter
    and the rounding level of the matrix by a factor 10; otherwise the next
    rung is tried. An exhausted ladder raises FactorizationError.
    """
    a = np.asarray(gram, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"gram must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("gram has non-finite entries")
    if not np.array_equal(a, a.T):
        raise ValidationError("gram must be exactly symmetric")

    size = a.shape[0]
    if size == 0:
        return GramFactor(gram=a, lower=np.zeros((0, 0)), jitter=0.0, jitter_ratio=0.0)

    scale = float(np.trace(a)) / size
    floor = np.finfo(float).eps * abs(scale)
    for delta in ladder:
        jitter = float(delta) * scale
        try:
            lower = cholesky(a + jitter * np.eye(size), lower=True, check_finite=False)
        except LinAlgError:
            continue
        pivot = float(np.min(np.diag(lower)) ** 2)
        if not np.isfinite(pivot) or pivot <= 10.0 * max(jitter, floor):
            continue
        if delta > 0.0:
            logger.warning("gram factorization needed jitter %.1e (size %d)", delta, size)
        return GramFactor(gram=a, lower=lower, jitter=jitter, jitter_ratio=float(delta))

    smallest = smallest_pivot(a)
    raise FactorizationError(
        f"gram of size {size} is not positive definite after jitter ladder {tuple(ladder)}; "
        f"smallest pivot {smallest:.3e}",
        smallest_pivot=smallest,
        ladder=ladder,
    )


def smallest_pivot(gram: np.ndarray) -> float:
    """Smallest pivot of unpivoted symmetric elimination; stops at the first non-positive one."""
    a = np.array(gram, dtype=float)
    n = a.shape[0]
    smallest = math.inf
    for k in range(n):
        p = a[k, k]
        smallest = min(smallest, float(p))
        if p <= 0.0:
            break
        if k + 1 < n:
            col = a[k + 1 :, k]
            a[k + 1 :, k + 1 :] -= np.outer(col, col) / p
    return smallest


# ----------------------------------------------------------------------
# GRID SPACING
# ----------------------------------------------------------------------

def grid_spacing(points: Any) -> float:
    """Smallest nearest-neighbour distance h of a point cloud (>= 2 distinct points)."""
    pts = as_points(points)
    if pts.shape[0] < 2:
        raise ValidationError("grid spacing needs at least two points")
    nn = NearestNeighbors(n_neighbors=2).fit(pts)
    dist, _ = nn.kneighbors(pts)
    h = float(np.min(dist[:, 1]))
    if h <= 0.0:
        raise ValidationError("grid contains repeated points")
    return h


def default_epsilon(points: Any, factor: float = 0.5) -> float:
    return float(factor) * grid_spacing(points)


def kernel_from_grid(alpha: float, dim: int, points: Any, factor: float = 0.5, h: Optional[float] = None) -> KernelSpec:
    spacing = grid_spacing(points) if h is None else float(h)
    return KernelSpec(alpha=float(alpha), dim=int(dim), epsilon=float(factor) * spacing)
