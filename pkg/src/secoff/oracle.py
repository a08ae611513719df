"""Brute-force grid search over tiny instances.

Provides an independent optimum estimate for the acceptance suite.  The
enumeration walks every subcarrier assignment (including leaving a
subcarrier unassigned) and every grid combination of transmit powers, then
scans offload-fraction and frequency grids for a feasibility witness,
visiting power combinations in descending-objective order so the first
witness per assignment is optimal for it.  Grids always contain the exact
boundary values 0, p_max, 1 and the frequency caps, where the interesting
optima live.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    Allocation,
    ChannelState,
    InfeasibleError,
    SystemConfig,
    UNASSIGNED,
    check_feasibility,
)
from .optimizer import PHI_MIN

_MAX_PAIRS = 2
_MAX_SUBCARRIERS = 3


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution: power levels per subcarrier, offload-fraction levels
    per pair, frequency levels per CPU variable."""

    p_levels: int = 16
    lambda_levels: int = 11
    f_levels: int = 8

    def __post_init__(self):
        if min(self.p_levels, self.lambda_levels, self.f_levels) < 2:
            raise ValueError("every grid must have at least 2 levels")


def _user_witness(task, c_mec, F_mec, rates_row, ptilde_row, lam_grid, f_loc_grid,
                  f_mec_grids, tol=1e-12):
    """Cheapest feasibility witness for one user given its achieved rates.

    Scans the offload-fraction lattice and local-frequency grid; for each
    feasible combination the per-server frequency requirement is rounded up
    to its grid.  Returns (lambda_row, f_local, f_req) minimizing the total
    server-frequency demand, or None.
    """
    M = len(rates_row)
    best = None
    for lam_row in itertools.product(lam_grid, repeat=M):
        lam_sum = sum(lam_row)
        if lam_sum > 1.0 + tol:
            continue
        if any(l > tol and rates_row[m] <= 0.0 for m, l in enumerate(lam_row)):
            continue
        # Server frequency demand per active pair.
        f_req = np.zeros(M)
        ok = True
        e_off = 0.0
        for m, l in enumerate(lam_row):
            if l <= tol:
                continue
            t_send = task.s_bits * l / rates_row[m]
            slack = task.T_max_s - t_send
            if slack <= 0.0:
                ok = False
                break
            need = c_mec[m] * task.s_bits * l / slack
            grid = f_mec_grids[m]
            idx = np.searchsorted(grid, need - 1e-12 * F_mec[m])
            if idx >= grid.size:
                ok = False
                break
            f_req[m] = grid[idx]
            e_off += t_send * ptilde_row[m]
        if not ok:
            continue
        residue = 1.0 - min(lam_sum, 1.0)
        if residue <= tol:
            f_loc, e_loc = 0.0, 0.0
        else:
            need_loc = task.c_cycles_per_bit * residue * task.s_bits / task.T_max_s
            idx = np.searchsorted(f_loc_grid, need_loc - 1e-12 * task.F_local_Hz)
            if idx >= f_loc_grid.size:
                continue
            f_loc = float(f_loc_grid[idx])
            e_loc = (task.eta * task.c_cycles_per_bit * residue * task.s_bits
                     * f_loc ** 2)
        if e_loc + e_off > task.E_budget_J * (1.0 + 1e-9):
            continue
        total = float(f_req.sum())
        if best is None or total < best[0]:
            best = (total, np.array(lam_row), f_loc, f_req)
            if total == 0.0:
                break
    return None if best is None else best[1:]


def brute_force(config: SystemConfig, channels: ChannelState,
                grid: GridSpec) -> tuple[float, Allocation]:
    """Best feasible clipped objective and its allocation by enumeration.

    Instances are capped at K*M <= 2 pairs and N <= 3 subcarriers; anything
    larger raises before any work is done.
    """
    K, N, M = config.K, config.N, config.M
    if K * M > _MAX_PAIRS or N > _MAX_SUBCARRIERS:
        raise ValueError(
            f"oracle budget guard: need K*M <= {_MAX_PAIRS} and N <= {_MAX_SUBCARRIERS}")

    B = config.B_Hz
    h = channels.h_tilde
    g = channels.g_worst
    pairs = [(k, m) for k in range(K) for m in range(M)]
    lam_grid = np.linspace(0.0, 1.0, grid.lambda_levels)
    f_mec_grids = [config.F_mec_Hz[m] * np.arange(1, grid.f_levels + 1) / grid.f_levels
                   for m in range(M)]
    f_loc_grids = [t.F_local_Hz * np.arange(1, grid.f_levels + 1) / grid.f_levels
                   for t in config.tasks]

    best_obj = -math.inf
    best_alloc = None

    for assignment in itertools.product([None] + pairs, repeat=N):
        assigned = [n for n in range(N) if assignment[n] is not None]
        # Power grids only on assigned subcarriers.
        level_sets = []
        for n in assigned:
            k, _ = assignment[n]
            level_sets.append(np.linspace(0.0, config.tasks[k].p_max_W, grid.p_levels))
        if assigned:
            combos = np.array(list(itertools.product(*level_sets)))
        else:
            combos = np.zeros((1, 0))

        # Clipped objective and per-pair quantities for every combo at once.
        obj = np.zeros(combos.shape[0])
        rates_pair = np.zeros((combos.shape[0], K, M))
        ptilde_pair = np.zeros((combos.shape[0], K, M))
        p_sum_user = np.zeros((combos.shape[0], K))
        for col, n in enumerate(assigned):
            k, m = assignment[n]
            p = combos[:, col]
            r = B * (np.log2(1.0 + p * h[k, n, m]) - np.log2(1.0 + p * g[k, n]))
            obj += np.maximum(r, 0.0)
            rates_pair[:, k, m] += r
            ptilde_pair[:, k, m] += p + config.tasks[k].p_circuit_W
            p_sum_user[:, k] += p

        order = np.argsort(-obj, kind="stable")
        for idx in order:
            if obj[idx] <= best_obj:
                break
            ok = True
            lam_full = np.zeros((K, M))
            f_loc_full = np.zeros(K)
            f_req_full = np.zeros((K, M))
            for k in range(K):
                if p_sum_user[idx, k] > config.tasks[k].p_max_W * (1.0 + 1e-9):
                    ok = False
                    break
                witness = _user_witness(config.tasks[k], config.c_mec_cycles_per_bit,
                                        config.F_mec_Hz, rates_pair[idx, k],
                                        ptilde_pair[idx, k], lam_grid,
                                        f_loc_grids[k], f_mec_grids)
                if witness is None:
                    ok = False
                    break
                lam_full[k], f_loc_full[k], f_req_full[k] = witness
            if not ok:
                continue
            if (f_req_full.sum(axis=0) > config.F_mec_Hz * (1.0 + 1e-9)).any():
                continue
            assign_vec = np.array(
                [UNASSIGNED if assignment[n] is None else
                 assignment[n][0] * M + assignment[n][1] for n in range(N)],
                dtype=np.int64)
            Q = np.zeros((K, N))
            for col, n in enumerate(assigned):
                Q[assignment[n][0], n] = combos[idx, col]
            phi = np.maximum(rates_pair[idx], PHI_MIN)
            candidate = Allocation(assign=assign_vec, Q=Q, Lambda=lam_full,
                                   f_local=f_loc_full, f_mec=f_req_full, Phi=phi)
            if check_feasibility(config, channels, candidate, tol_rel=1e-6):
                continue  # the analytic witness disagreed; distrust it
            if obj[idx] > best_obj:
                best_obj = float(obj[idx])
                best_alloc = candidate
            break

    if best_alloc is None:
        raise InfeasibleError("no grid point is feasible for this instance")
    return best_obj, best_alloc
