"""Phase-1 simplex feasibility solver for the offload-fraction subproblem.

The subproblem is tiny (K*M box-bounded variables, a few dozen inequality
rows), so a dense two-phase tableau is simpler and more portable than an
external LP dependency.  Phase 1 minimizes the sum of artificial variables;
an optional phase 2 maximizes a linear objective over the feasible region
(used to warm-start offloading-heavy regimes with max sum-lambda).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemConfig

FEAS_TOL = 1e-9  # absolute residual tolerance, problem data is O(1) after normalization
_PIV_TOL = 1e-10
_ENTER_TOL = 1e-11


class LPError(Exception):
    """Simplex failed structurally (pivot cap exceeded, unbounded phase 2)."""


@dataclass
class LinearFeasibilityProblem:
    """Inequality rows A_ub x <= b_ub with box bounds lower <= x <= upper."""

    n_vars: int
    A_ub: np.ndarray
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.A_ub = np.atleast_2d(np.asarray(self.A_ub, dtype=float))
        self.b_ub = np.asarray(self.b_ub, dtype=float).ravel()
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        if self.A_ub.shape != (self.b_ub.size, self.n_vars):
            raise ValueError("A_ub shape inconsistent with b_ub and n_vars")
        if self.lower.shape != (self.n_vars,) or self.upper.shape != (self.n_vars,):
            raise ValueError("box bounds must have shape (n_vars,)")
        if (self.lower > self.upper + FEAS_TOL).any():
            raise ValueError("lower bound exceeds upper bound")


def check_point(lp: LinearFeasibilityProblem, x: np.ndarray,
                tol: float = FEAS_TOL) -> bool:
    """Independent row-by-row re-check of a candidate point."""
    x = np.asarray(x, dtype=float)
    if (x < lp.lower - tol).any() or (x > lp.upper + tol).any():
        return False
    return bool((lp.A_ub @ x <= lp.b_ub + tol).all())


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])


def _run_simplex(T: np.ndarray, cost: np.ndarray, basis: np.ndarray,
                 allowed: np.ndarray, max_pivots: int, bland_after: int) -> int:
    """Pivot T to optimality for min cost'z.  Returns pivot count.

    T has shape (R, C+1) with the rhs in the last column; ``allowed`` masks
    columns permitted to enter.  Dantzig's rule switches to Bland's after
    ``bland_after`` pivots to guard against cycling.
    """
    n_rows = T.shape[0]
    pivots = 0
    while True:
        red = cost - cost[basis] @ T[:, :-1]
        red[~allowed] = 0.0
        if pivots < bland_after:
            col = int(np.argmin(red))
            if red[col] >= -_ENTER_TOL:
                return pivots
        else:
            negative = np.flatnonzero(red < -_ENTER_TOL)
            if negative.size == 0:
                return pivots
            col = int(negative[0])
        ratios = np.full(n_rows, np.inf)
        positive = T[:, col] > _PIV_TOL
        ratios[positive] = T[positive, -1] / T[positive, col]
        if not np.isfinite(ratios).any():
            raise LPError("unbounded pivot direction")
        best = ratios.min()
        # Tie-break on the smallest basis index (Bland-safe).
        candidates = np.flatnonzero(ratios <= best + 1e-15)
        row = int(candidates[np.argmin(basis[candidates])])
        _pivot(T, row, col)
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise LPError(f"exceeded {max_pivots} simplex pivots")


def find_feasible(lp: LinearFeasibilityProblem, maximize: np.ndarray | None = None,
                  max_pivots: int = 5000, bland_after: int = 200) -> np.ndarray | None:
    """Return a point satisfying all rows and box bounds, or None if infeasible.

    Phase 1 drives the artificial sum to (numerical) zero; the instance is
    declared infeasible iff the phase-1 optimum exceeds ``FEAS_TOL``.  When
    ``maximize`` is given, a phase 2 maximizes that linear objective before
    the vertex is read off.  Deterministic for identical problem bytes.
    """
    n = lp.n_vars
    span = lp.upper - lp.lower
    # Shift to y = x - lower >= 0 and append the upper-bound rows.
    A = np.vstack([lp.A_ub, np.eye(n)])
    b = np.concatenate([lp.b_ub - lp.A_ub @ lp.lower, span])
    n_rows = A.shape[0]

    neg = b < 0
    art_rows = np.flatnonzero(neg)
    n_art = art_rows.size
    slack = np.eye(n_rows)
    A = A.copy()
    A[neg] *= -1.0
    slack[neg] *= -1.0
    b = np.abs(b)
    art = np.zeros((n_rows, n_art))
    art[art_rows, np.arange(n_art)] = 1.0

    T = np.hstack([A, slack, art, b[:, None]])
    n_cols = n + n_rows + n_art
    basis = np.empty(n_rows, dtype=int)
    basis[:] = n + np.arange(n_rows)  # slacks
    basis[art_rows] = n + n_rows + np.arange(n_art)  # artificials

    cost1 = np.zeros(n_cols)
    cost1[n + n_rows:] = 1.0
    allowed = np.ones(n_cols, dtype=bool)
    used = _run_simplex(T, cost1, basis, allowed, max_pivots, bland_after)

    phase1_value = float(cost1[basis] @ T[:, -1])
    if phase1_value > FEAS_TOL:
        return None

    if maximize is not None:
        cost2 = np.zeros(n_cols)
        cost2[:n] = -np.asarray(maximize, dtype=float)
        allowed2 = np.ones(n_cols, dtype=bool)
        allowed2[n + n_rows:] = False  # artificials may leave but never re-enter
        _run_simplex(T, cost2, basis, allowed2, max_pivots - used, bland_after)

    y = np.zeros(n_cols)
    y[basis] = T[:, -1]
    x = lp.lower + y[:n]
    # Clean tiny negative noise from degenerate pivots before the re-check.
    x = np.clip(x, lp.lower, lp.upper)
    if not check_point(lp, x):
        raise LPError("simplex returned a point failing the independent re-check")
    return x


def build_p1(config: SystemConfig, rates_km: np.ndarray, ptilde_km: np.ndarray,
             f_local: np.ndarray, f_mec: np.ndarray,
             full_offload: bool = False) -> LinearFeasibilityProblem:
    """Assemble the offload-fraction feasibility LP for fixed (X, Q, F, f).

    Variables are lambda[k, m] flattened C-order.  Rows encode, per user,
    the local-latency, energy and simplex constraints, and per usable pair
    the offload-latency constraint; pairs with non-positive achieved rate or
    zero server frequency are pinned to lambda = 0 through the upper bound.
    ``full_offload`` adds the sum-lambda = 1 rows used by the FO baseline.
    """
    K, M = config.K, config.M
    n = K * M
    lower = np.zeros(n)
    upper = np.ones(n)
    rows = []
    rhs = []

    usable = (rates_km > 0.0) & (f_mec > 0.0)
    upper[~usable.ravel()] = 0.0

    for k in range(K):
        task = config.tasks[k]
        cs = task.c_cycles_per_bit * task.s_bits
        cols = slice(k * M, (k + 1) * M)

        # Local latency: c*s*(1 - sum lambda) / f_local <= T.
        row = np.zeros(n)
        if f_local[k] > 0.0:
            row[cols] = -cs / f_local[k]
            rows.append(row)
            rhs.append(task.T_max_s - cs / f_local[k])
        else:
            row[cols] = -1.0
            rows.append(row)
            rhs.append(-1.0)

        # Energy: eta*c*s*(1-sum)*f^2 + sum_m (s*ptilde/r) lambda <= E.
        e_coeff = task.eta * cs * f_local[k] ** 2
        row = np.zeros(n)
        for m in range(M):
            transmit = (task.s_bits * ptilde_km[k, m] / rates_km[k, m]
                        if usable[k, m] else 0.0)
            row[k * M + m] = transmit - e_coeff
        rows.append(row)
        rhs.append(task.E_budget_J - e_coeff)

        # Simplex bound on the total offloaded fraction.
        row = np.zeros(n)
        row[cols] = 1.0
        rows.append(row)
        rhs.append(1.0)
        if full_offload:
            row = np.zeros(n)
            row[cols] = -1.0
            rows.append(row)
            rhs.append(-1.0)

        # Per-pair offload latency: (s/r + c_m*s/f) lambda <= T.
        for m in range(M):
            if not usable[k, m]:
                continue
            row = np.zeros(n)
            row[k * M + m] = (task.s_bits / rates_km[k, m]
                              + config.c_mec_cycles_per_bit[m] * task.s_bits / f_mec[k, m])
            rows.append(row)
            rhs.append(task.T_max_s)

    return LinearFeasibilityProblem(n_vars=n, A_ub=np.array(rows),
                                    b_ub=np.array(rhs), lower=lower, upper=upper)
