# src/solvers/cone_qp.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from src.shared.core_types import DiscreteMeasure, Region
from src.shared.energy import EnergyContext, measure_context, potential
from src.shared.errors import NonConvergenceError, ValidationError
from src.shared.kernels import KernelSpec, factor_gram

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ProjectionProblem:
    """
    Projection of `source` onto the cone of positive measures on `region`.

    tolerance is relative: KKT residuals are accepted below
    tolerance * (1 + max|b|), b being the source potential on the region.
    """
    source: DiscreteMeasure
    region: Region
    kernel: KernelSpec
    mass_cap: Optional[float] = None
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: Optional[int] = None

    def __post_init__(self) -> None:
        if not (self.tolerance > 0.0):
            raise ValidationError(f"tolerance must be > 0, got {self.tolerance}")
        if self.mass_cap is not None and (not math.isfinite(self.mass_cap) or self.mass_cap < 0.0):
            raise ValidationError(f"mass_cap must be a finite value >= 0, got {self.mass_cap}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if self.source.size and self.source.dim != self.kernel.dim:
            raise ValidationError("source dimension does not match the kernel")
        if self.region.dim != self.kernel.dim:
            raise ValidationError("region dimension does not match the kernel")


@dataclass(frozen=True)
class KktCertificate:
    """
    Optimality residuals of a projection.

    All three residuals are held to the same tolerance, which callers set
    to tol * (1 + max|b|).
    """
    stationarity_residual: float
    dual_feasibility: float
    complementarity: float
    multiplier: float
    tolerance: float
    cap_active: bool = False
    mass: float = 0.0

    @property
    def ok(self) -> bool:
        return (
            self.stationarity_residual <= self.tolerance
            and self.dual_feasibility <= self.tolerance
            and self.complementarity <= self.tolerance
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stationarity_residual": self.stationarity_residual,
            "dual_feasibility": self.dual_feasibility,
            "complementarity": self.complementarity,
            "multiplier": self.multiplier,
            "tolerance": self.tolerance,
            "cap_active": self.cap_active,
            "mass": self.mass,
        }


@dataclass
class SolveStats:
    iterations: int = 0
    additions: int = 0
    removals: int = 0
    refactorizations: int = 0
    active_set_size: int = 0
    cap_active: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "additions": self.additions,
            "removals": self.removals,
            "refactorizations": self.refactorizations,
            "active_set_size": self.active_set_size,
            "cap_active": self.cap_active,
        }


def objective(K: np.ndarray, b: np.ndarray, w: np.ndarray) -> float:
    return float(0.5 * w @ K @ w - b @ w)


def kkt_certificate(
    K: np.ndarray,
    b: np.ndarray,
    w: np.ndarray,
    lam: float,
    tol: float,
    mass_cap: Optional[float] = None,
    cap_active: bool = False,
) -> KktCertificate:
    """
    Residuals of the optimality system of min 1/2 w'Kw - b'w, w >= 0 [, sum w <= cap].

    complementarity adds |lam| * |cap - sum w| so a multiplier on a slack
    cap shows up as a violation.
    """
    g = K @ w - b if w.size else np.zeros(0)
    shifted = g + lam
    on = w > 0.0
    stationarity = float(np.max(np.abs(shifted[on]))) if np.any(on) else 0.0
    dual = float(np.max(np.maximum(0.0, -shifted))) if shifted.size else 0.0
    comp = abs(float(w @ shifted)) if w.size else 0.0
    if mass_cap is not None:
        comp += abs(lam) * abs(float(mass_cap) - float(np.sum(w)))
    return KktCertificate(
        stationarity_residual=stationarity,
        dual_feasibility=dual,
        complementarity=comp,
        multiplier=float(lam),
        tolerance=float(tol),
        cap_active=bool(cap_active),
        mass=float(np.sum(w)) if w.size else 0.0,
    )


# ----------------------------------------------------------------------
# PASSIVE-SET FACTOR
# ----------------------------------------------------------------------

class _PassiveFactor:
    """
    Cholesky factor of K[P, P] for an ordered passive list P.

    Appends go through one triangular solve; deletions are repaired with
    Givens rotations. A pivot that collapses triggers a full refactor.
    """

    def __init__(self, K: np.ndarray) -> None:
        self._K = K
        self.members: List[int] = []
        self.lower = np.zeros((0, 0))
        self.refactorizations = 0

    def reset(self, members: Sequence[int]) -> None:
        self.members = [int(i) for i in members]
        if not self.members:
            self.lower = np.zeros((0, 0))
            return
        self._refactor()

    def append(self, i: int) -> None:
        k = len(self.members)
        d = float(self._K[i, i])
        if k == 0:
            self.members.append(i)
            self.lower = np.array([[math.sqrt(d)]])
            return
        col = self._K[self.members, i]
        l = solve_triangular(self.lower, col, lower=True, check_finite=False)
        pivot = d - float(l @ l)
        self.members.append(i)
        if pivot <= 10.0 * np.finfo(float).eps * d:
            self._refactor()
            return
        grown = np.zeros((k + 1, k + 1))
        grown[:k, :k] = self.lower
        grown[k, :k] = l
        grown[k, k] = math.sqrt(pivot)
        self.lower = grown

    def remove(self, i: int) -> None:
        p = self.members.index(i)
        k = len(self.members)
        M = np.delete(self.lower, p, axis=0)
        for j in range(p, k - 1):
            a = M[j, j]
            e = M[j, j + 1]
            r = math.hypot(a, e)
            if r == 0.0:
                continue
            c, s = a / r, e / r
            colj = M[j:, j].copy()
            colj1 = M[j:, j + 1].copy()
            M[j:, j] = c * colj + s * colj1
            M[j:, j + 1] = -s * colj + c * colj1
        self.lower = np.ascontiguousarray(M[:, : k - 1])
        self.members.pop(p)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if not self.members:
            return np.zeros(0)
        return cho_solve((self.lower, True), rhs, check_finite=False)

    def _refactor(self) -> None:
        sub = self._K[np.ix_(self.members, self.members)]
        sub = np.triu(sub) + np.triu(sub, 1).T
        self.lower = factor_gram(sub).lower
        self.refactorizations += 1


# ----------------------------------------------------------------------
# CORE SOLVER
# ----------------------------------------------------------------------

def solve_nnls_core(
    K: Any,
    b: Any,
    mass_cap: Optional[float] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    mass_equality: bool = False,
) -> Tuple[np.ndarray, float, SolveStats]:
    """
    Active-set solver for min 1/2 w'Kw - b'w subject to w >= 0 and,
    with a cap, sum(w) <= cap (or sum(w) == cap when mass_equality).

    Returns (w, lam, stats), lam being the multiplier of the mass
    constraint (0 when it is absent or slack). tol is absolute; the default
    is 1e-9 * (1 + max|b|). The most violated dual coordinate enters first,
    lowest index on ties.
    """
    K = np.asarray(K, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    m = b.shape[0]
    if K.shape != (m, m):
        raise ValidationError(f"K has shape {K.shape}, expected ({m}, {m})")
    if mass_cap is not None and (not math.isfinite(mass_cap) or mass_cap < 0.0):
        raise ValidationError(f"mass_cap must be a finite value >= 0, got {mass_cap}")
    if mass_equality and mass_cap is None:
        raise ValidationError("mass_equality needs a mass_cap")

    b_inf = float(np.max(np.abs(b))) if m else 0.0
    tol = DEFAULT_TOLERANCE * (1.0 + b_inf) if tol is None else float(tol)
    max_iter = 10 * max(m, 1) if max_iter is None else int(max_iter)
    stats = SolveStats()

    if m == 0:
        return np.zeros(0), 0.0, stats

    if mass_cap is not None and mass_cap == 0.0:
        lam = float(np.max(b)) if mass_equality else max(0.0, float(np.max(b)))
        stats.cap_active = True
        return np.zeros(m), lam, stats

    return _ActiveSetRun(K, b, mass_cap, tol, max_iter, mass_equality, stats).run()


class _ActiveSetRun:
    """One solve. The mass cap is a single extra working-set constraint."""

    def __init__(
        self,
        K: np.ndarray,
        b: np.ndarray,
        mass_cap: Optional[float],
        tol: float,
        max_iter: int,
        mass_equality: bool,
        stats: SolveStats,
    ) -> None:
        self.K = K
        self.b = b
        self.m = b.shape[0]
        self.cap = mass_cap
        self.tol = tol
        self.max_iter = max_iter
        self.equality = mass_equality
        self.stats = stats
        self.factor = _PassiveFactor(K)
        self.w = np.zeros(self.m)
        self.lam = 0.0
        self.cap_active = False
        self._seen: Set[Tuple[Tuple[int, ...], bool]] = set()

    # ----- driver -----

    def run(self) -> Tuple[np.ndarray, float, SolveStats]:
        if self.equality:
            self._start_at_best_vertex()
        elif np.any(self.b > 0.0):
            self._start_from_clipped_minimizer()

        while True:
            state = (tuple(sorted(self.factor.members)), self.cap_active)
            if state in self._seen:
                self._fail("active set revisited (cycling guard)")
            self._seen.add(state)

            g = self.K @ self.w - self.b
            entering, release_cap = self._most_violated(g)
            if entering is None and not release_cap:
                break

            if release_cap:
                self.cap_active = False
            else:
                self.factor.append(entering)
                self.stats.additions += 1

            self._settle()

        self.stats.active_set_size = len(self.factor.members)
        self.stats.cap_active = self.cap_active
        self.stats.refactorizations = self.factor.refactorizations
        w = np.where(self.w > 0.0, self.w, 0.0)
        return w, (self.lam if self.cap_active else 0.0), self.stats

    def _start_at_best_vertex(self) -> None:
        cap = float(self.cap)
        diag = np.diag(self.K)
        scores = 0.5 * cap * cap * diag - cap * self.b
        i = int(np.argmin(scores))
        self.factor.append(i)
        self.cap_active = True
        self.w[i] = cap
        self.lam = float(self.b[i] - cap * diag[i])

    def _start_from_clipped_minimizer(self) -> None:
        """
        Warm start: minimize on all coordinates, drop the non-positive ones,
        repeat until the subspace minimizer is positive. Every iterate is a
        feasible subspace minimizer, so the active-set loop can take over.
        """
        members = list(range(self.m))
        while members:
            self.factor.reset(members)
            self.stats.iterations += 1
            z, _ = self._subspace_minimizer(members, cap_active=False)
            keep = [i for i in members if z[i] > 0.0]
            if len(keep) == len(members):
                break
            members = keep
        if not members:
            self.factor.reset([])
            return

        total = float(np.sum(z))
        if self.cap is not None and total > float(self.cap):
            self.w = z * (float(self.cap) / total)
            self.cap_active = True
            self._settle()
        else:
            self.w = z

    def _most_violated(self, g: np.ndarray) -> Tuple[Optional[int], bool]:
        lam = self.lam if self.cap_active else 0.0
        shifted = g + lam
        shifted[self.factor.members] = np.inf
        j = int(np.argmin(shifted))
        worst = float(shifted[j])

        cap_violation = math.inf
        if self.cap_active and not self.equality:
            cap_violation = self.lam

        if worst >= -self.tol and cap_violation >= -self.tol:
            return None, False
        if cap_violation < worst:
            return None, True
        return j, False

    # ----- inner loop -----

    def _settle(self) -> None:
        """Move from w toward the subspace minimizer, dropping blockers until it is feasible."""
        while True:
            self.stats.iterations += 1
            if self.stats.iterations > self.max_iter:
                self._fail(f"iteration budget {self.max_iter} exhausted")

            P = list(self.factor.members)
            z, lam = self._subspace_minimizer(P, self.cap_active)
            zP = z[P]

            cap_blocks = (
                self.cap is not None
                and not self.cap_active
                and float(np.sum(zP)) > float(self.cap)
            )
            neg = zP <= 0.0
            if not np.any(neg) and not cap_blocks:
                self.w = z
                self.lam = lam
                return

            step, blocker = self._ratio_step(P, zP, neg, cap_blocks)
            wP = self.w[P]
            moved = np.zeros(self.m)
            moved[P] = wP + step * (zP - wP)
            if blocker is None:
                self.cap_active = True
                self.w = np.where(moved > 0.0, moved, 0.0)
                continue
            moved[blocker] = 0.0
            self.w = np.where(moved > 0.0, moved, 0.0)
            for idx in [i for i in P if self.w[i] <= 0.0]:
                self.factor.remove(idx)
                self.stats.removals += 1

    def _ratio_step(
        self, P: List[int], zP: np.ndarray, neg: np.ndarray, cap_blocks: bool
    ) -> Tuple[float, Optional[int]]:
        wP = self.w[P]
        step = math.inf
        blocker: Optional[int] = None
        for pos in np.flatnonzero(neg):
            denom = wP[pos] - zP[pos]
            t = wP[pos] / denom if denom > 0.0 else 0.0
            if t < step:
                step, blocker = t, P[pos]
        if cap_blocks:
            slack = float(self.cap) - float(np.sum(wP))
            rise = float(np.sum(zP)) - float(np.sum(wP))
            t = slack / rise if rise > 0.0 else 0.0
            if t < step:
                step, blocker = t, None
        return max(0.0, min(step, 1.0)), blocker

    def _subspace_minimizer(self, P: List[int], cap_active: bool) -> Tuple[np.ndarray, float]:
        """Stationary point on span(P) (with sum == cap when cap_active), one refinement step."""
        z = np.zeros(self.m)
        if not P:
            return z, 0.0
        bP = self.b[P]
        if not cap_active:
            zP = self.factor.solve(bP)
            z[P] = zP
            r = bP - (self.K @ z)[P]
            z[P] = zP + self.factor.solve(r)
            return z, 0.0

        cap = float(self.cap)
        u = self.factor.solve(bP)
        v = self.factor.solve(np.ones(len(P)))
        sv = float(np.sum(v))
        lam = (float(np.sum(u)) - cap) / sv
        z[P] = u - lam * v
        r1 = bP - (self.K @ z)[P] - lam
        r2 = cap - float(np.sum(z[P]))
        du = self.factor.solve(r1)
        dlam = (float(np.sum(du)) - r2) / sv
        z[P] = z[P] + du - dlam * v
        return z, lam + dlam

    def _fail(self, reason: str) -> None:
        lam = self.lam if self.cap_active else 0.0
        cert = kkt_certificate(self.K, self.b, self.w, lam, self.tol, self.cap, self.cap_active)
        raise NonConvergenceError(
            f"active-set solve did not converge: {reason}",
            best_weights=self.w.copy(),
            residuals={
                "stationarity": cert.stationarity_residual,
                "dual_feasibility": cert.dual_feasibility,
                "complementarity": cert.complementarity,
            },
            iterations=self.stats.iterations,
        )


# ----------------------------------------------------------------------
# PROJECTION
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectionOutcome:
    weights: np.ndarray
    certificate: KktCertificate
    stats: SolveStats
    b: np.ndarray = field(repr=False)
    gram_jitter: float = 0.0


def project(
    problem: ProjectionProblem,
    ctx: Optional[EnergyContext] = None,
) -> Tuple[np.ndarray, KktCertificate]:
    outcome = project_detailed(problem, ctx)
    return outcome.weights, outcome.certificate


def project_detailed(problem: ProjectionProblem, ctx: Optional[EnergyContext] = None) -> ProjectionOutcome:
    """
    Weights on region.points of the energy projection of problem.source.

    Raises NonConvergenceError when the iteration budget runs out or when
    the final certificate misses the tolerance.
    """
    ctx = measure_context(problem.kernel, ctx=ctx)
    region = problem.region
    m = region.size
    if m == 0:
        cert = KktCertificate(0.0, 0.0, 0.0, 0.0, problem.tolerance)
        return ProjectionOutcome(np.zeros(0), cert, SolveStats(), b=np.zeros(0))

    b = potential(ctx, problem.source, region.points)
    tol = problem.tolerance * (1.0 + float(np.max(np.abs(b))))

    if problem.source.is_zero():
        cert = KktCertificate(0.0, 0.0, 0.0, 0.0, tol)
        return ProjectionOutcome(np.zeros(m), cert, SolveStats(), b=b)

    K = ctx.gram(region.points)
    factor = factor_gram(K)
    if factor.jitter > 0.0:
        K = K + factor.jitter * np.eye(m)

    max_iter = problem.max_iterations or 10 * m
    w, lam, stats = solve_nnls_core(K, b, mass_cap=problem.mass_cap, tol=tol, max_iter=max_iter)
    cert = kkt_certificate(K, b, w, lam, tol, problem.mass_cap, stats.cap_active)
    if not cert.ok:
        raise NonConvergenceError(
            "projection finished with KKT residuals above tolerance",
            best_weights=w,
            residuals={
                "stationarity": cert.stationarity_residual,
                "dual_feasibility": cert.dual_feasibility,
                "complementarity": cert.complementarity,
            },
            iterations=stats.iterations,
        )
    logger.debug(
        "projection onto %s: %d iterations, %d active, cap_active=%s",
        region.label or "region",
        stats.iterations,
        stats.active_set_size,
        stats.cap_active,
    )
    return ProjectionOutcome(w, cert, stats, b=b, gram_jitter=factor.jitter)
