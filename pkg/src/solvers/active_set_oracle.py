# src/solvers/active_set_oracle.py
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Any, Optional, Tuple

import numpy as np

from src.shared.errors import ValidationError
from src.solvers.cone_qp import objective

MAX_ORACLE_SIZE = 12


@dataclass(frozen=True)
class OracleSolution:
    weights: np.ndarray
    objective: float
    support: Tuple[int, ...]
    cap_active: bool
    candidates: int


def enumerate_active_sets(
    K: Any,
    b: Any,
    mass_cap: Optional[float] = None,
    mass_equality: bool = False,
    feasibility_tol: float = 1e-12,
) -> OracleSolution:
    """
    Brute-force minimizer of 1/2 w'Kw - b'w over w >= 0 [, sum w <= cap].

    Every support S is tried with the cap slack and (when a cap is given)
    with the cap tight. Each stationary point on S is made exactly feasible
    (or dropped when it is off by more than rounding) and the candidate of
    least objective wins. Exponential in the size, so limited to 12
    coordinates.
    """
    K = np.asarray(K, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    m = b.shape[0]
    if m > MAX_ORACLE_SIZE:
        raise ValidationError(f"oracle enumeration is limited to {MAX_ORACLE_SIZE} coordinates, got {m}")
    if mass_equality and mass_cap is None:
        raise ValidationError("mass_equality needs a mass_cap")
    if mass_cap is not None and mass_cap < 0.0:
        raise ValidationError("mass_cap must be >= 0")

    best_w: Optional[np.ndarray] = None
    best_obj = np.inf
    best_support: Tuple[int, ...] = ()
    best_tight = False
    count = 0

    scale = 1.0 + (float(np.max(np.abs(b))) if m else 0.0)

    for size in range(0, m + 1):
        for support in combinations(range(m), size):
            for tight in _branches(mass_cap, mass_equality):
                w = _stationary_point(K, b, support, mass_cap if tight else None, m)
                if w is None:
                    continue
                w = _make_feasible(K, w, support, mass_cap, tight, feasibility_tol * scale)
                if w is None:
                    continue
                count += 1
                obj = objective(K, b, w)
                if obj < best_obj:
                    best_obj, best_w, best_support, best_tight = obj, w, support, tight

    if best_w is None:
        raise ValidationError("oracle found no feasible candidate")
    return OracleSolution(
        weights=best_w,
        objective=float(best_obj),
        support=best_support,
        cap_active=best_tight,
        candidates=count,
    )


def _branches(mass_cap: Optional[float], mass_equality: bool) -> Tuple[bool, ...]:
    if mass_cap is None:
        return (False,)
    if mass_equality:
        return (True,)
    return (False, True)


def _stationary_point(
    K: np.ndarray,
    b: np.ndarray,
    support: Tuple[int, ...],
    cap: Optional[float],
    m: int,
) -> Optional[np.ndarray]:
    """Stationary point on the support; with a cap, of the bordered system [K 1; 1' 0]."""
    w = np.zeros(m)
    if not support:
        if cap is not None and cap > 0.0:
            return None
        return w
    idx = list(support)
    n = len(idx)
    try:
        if cap is None:
            w[idx] = np.linalg.solve(K[np.ix_(idx, idx)], b[idx])
            return w
        bordered = np.zeros((n + 1, n + 1))
        bordered[:n, :n] = K[np.ix_(idx, idx)]
        bordered[:n, n] = 1.0
        bordered[n, :n] = 1.0
        sol = np.linalg.solve(bordered, np.append(b[idx], float(cap)))
    except np.linalg.LinAlgError:
        return None
    w[idx] = sol[:n]
    return w


def _make_feasible(
    K: np.ndarray,
    w: np.ndarray,
    support: Tuple[int, ...],
    mass_cap: Optional[float],
    tight: bool,
    tol: float,
) -> Optional[np.ndarray]:
    """
    Clip rounding-level negatives and pull the mass onto the cap.

    The rounding slack grows with the condition number of K on the support,
    so the optimal support is not lost on ill-conditioned tables. Returned
    weights are exactly feasible.
    """
    idx = list(support)
    cond = float(np.linalg.cond(K[np.ix_(idx, idx)])) if idx else 1.0
    if not np.isfinite(cond):
        return None
    slack = tol * max(1.0, cond)
    if np.any(w < -slack * (1.0 + float(np.max(np.abs(w))))):
        return None
    w = np.where(w > 0.0, w, 0.0)
    if mass_cap is None:
        return w
    cap = float(mass_cap)
    total = float(np.sum(w))
    gap = total - cap if not tight else abs(total - cap)
    if gap > slack * max(1.0, cap):
        return None
    if total > cap or (tight and total > 0.0):
        w = w * (cap / total)
    return w
