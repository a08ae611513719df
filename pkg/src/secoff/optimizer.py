"""Lagrangian dual decomposition solver with closed-form primal blocks.

The engine runs three nested loops: an outer loop that refreshes the offload
fractions by re-solving the feasibility LP with the latest rates, a middle
loop of projected-subgradient multiplier updates, and an inner loop cycling
the closed-form block updates (subcarrier assignment, transmit power, server
frequency, user frequency, auxiliary rate bound) until the Lagrangian value
settles.

Two parallel states are maintained per middle iterate: the dual-side state
(raw block maximizers; constraint residuals evaluated here so violated
budgets actually drive their multipliers) and a primal candidate (powers
rescaled to the per-user budget, offload fractions re-derived by the LP)
from which the best feasible allocation stream is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lp as lp_mod
from .model import (
    LN2,
    UNASSIGNED,
    Allocation,
    ChannelState,
    InfeasibleError,
    Metrics,
    SystemConfig,
    achieved_rates,
    check_feasibility,
    circuit_power_sums,
    compute_metrics,
    local_energy,
    rate_table,
)

PHI_MIN = 1e-12  # bits/s floor keeping auxiliary bounds strictly positive
_F_MEC_MIN_FRAC = 1e-12  # active-pair server-frequency floor, fraction of capacity
_RES_CLIP = 10.0  # clip on normalized residuals fed to the multiplier update
# Start multipliers near zero: the first primal candidates are then the
# budget-projected full-power allocations, and ascent only raises prices on
# constraints that actually bind.
_DUAL_INIT = 0.01
_DUAL_MOVE_TOL = 1e-4  # middle loop stops when normalized multipliers settle


@dataclass
class DualState:
    """The seven nonnegative Lagrange-multiplier families."""

    alpha: np.ndarray  # (K,)  local latency
    beta: np.ndarray  # (K,M) offload latency
    gamma: np.ndarray  # (K,)  energy budget
    theta: np.ndarray  # (K,)  transmit-power budget
    mu: np.ndarray  # (M,)  server capacity
    psi: np.ndarray  # (K,M) auxiliary rate bound
    varphi: np.ndarray  # (K,) local-frequency cap

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "theta", "mu", "psi", "varphi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if (arr < 0).any():
                raise ValueError(f"multiplier family {name} must be nonnegative")
            setattr(self, name, arr)

    @staticmethod
    def zeros(K: int, M: int) -> "DualState":
        return DualState(np.zeros(K), np.zeros((K, M)), np.zeros(K), np.zeros(K),
                         np.zeros(M), np.zeros((K, M)), np.zeros(K))

    def copy(self) -> "DualState":
        return DualState(self.alpha.copy(), self.beta.copy(), self.gamma.copy(),
                         self.theta.copy(), self.mu.copy(), self.psi.copy(),
                         self.varphi.copy())


@dataclass
class Residuals:
    """Constraint residuals (lhs - rhs), one per multiplier entry."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    psi: np.ndarray
    varphi: np.ndarray


@dataclass
class SolverConfig:
    """Loop caps, tolerances and step rule for the dual solver."""

    z_max: int = 100
    inner_max: int = 50
    dual_max: int = 30
    eps1: float = 1e-6
    step0: float = 0.1
    step_rule: str = "diminishing"  # or "constant"
    mu_floor: float = 1e-12
    psi_floor: float = 1e-12
    secant_tol: float = 1e-10
    secant_max_iter: int = 80
    tol_rel: float = 1e-6
    lambda_objective: str = "max_offload"  # or "feasible" (phase-1 vertex as-is)

    def __post_init__(self):
        if self.z_max < 1 or self.inner_max < 1 or self.dual_max < 1:
            raise ValueError("loop caps must be >= 1")
        for name in ("eps1", "step0", "mu_floor", "psi_floor", "secant_tol", "tol_rel"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.step_rule not in ("diminishing", "constant"):
            raise ValueError("step_rule must be 'diminishing' or 'constant'")
        if self.lambda_objective not in ("max_offload", "feasible"):
            raise ValueError("lambda_objective must be 'max_offload' or 'feasible'")


@dataclass
class TracePoint:
    iteration: int
    dual_value: float
    best_primal_bps: float
    max_violation: float


@dataclass
class ConvergenceTrace:
    points: list = field(default_factory=list)
    converged: bool = False

    def to_csv(self) -> str:
        lines = ["iter,dual_value,best_primal_bps,max_violation"]
        for p in self.points:
            lines.append(f"{p.iteration},{p.dual_value!r},{p.best_primal_bps!r},"
                         f"{p.max_violation!r}")
        return "\n".join(lines) + "\n"


@dataclass
class SolveResult:
    allocation: Allocation
    metrics: Metrics
    trace: ConvergenceTrace
    converged: bool
    outer_iters: int
    scheme: str = "PA"


# ---------------------------------------------------------------------------
# Closed-form block updates (scalar contracts; vectorized twins inside the
# engine share the same formulas).
# ---------------------------------------------------------------------------

def optimal_power(h_tilde: float, g_worst: float, B: float, psi: float,
                  gamma: float, theta: float, s_bits: float, lam: float,
                  phi: float) -> float:
    """KKT-optimal transmit power for one candidate (user, subcarrier, server).

    Solves d/dp [(1+psi) * r(p) - (gamma*s*lam + theta*phi) * p / phi] = 0,
    a quadratic in p; returns the positive root clamped at zero.  Returns 0
    immediately when h_tilde <= g_worst (no positive secrecy rate exists).
    For g_worst == 0 the quadratic degenerates and the analytic limit
    (1+psi)*phi*B/(cost*ln2) - 1/h_tilde is used.
    """
    if phi <= 0.0:
        raise ValueError("phi must be > 0")
    cost = gamma * s_bits * lam + theta * phi
    if cost <= 0.0:
        raise ValueError("cost coefficient must be > 0; power is budget-capped otherwise")
    if h_tilde <= g_worst:
        return 0.0
    ratio = (1.0 + psi) * phi * B / (cost * LN2)
    if g_worst == 0.0:
        return max(ratio - 1.0 / h_tilde, 0.0)
    diff = h_tilde - g_worst
    disc = 4.0 * h_tilde * g_worst * diff * ratio + diff * diff
    p = (math.sqrt(disc) - (h_tilde + g_worst)) / (2.0 * h_tilde * g_worst)
    return max(p, 0.0)


def subcarrier_score(p: float, h_tilde: float, g_worst: float, B: float,
                     psi: float, gamma: float, theta: float, s_bits: float,
                     lam: float, phi: float) -> float:
    """Per-subcarrier assignment score (1+psi)*r - (gamma*s*lam + theta*phi)*p/phi."""
    if phi <= 0.0:
        raise ValueError("phi must be > 0")
    r = B * (math.log2(1.0 + p * h_tilde) - math.log2(1.0 + p * g_worst))
    return (1.0 + psi) * r - (gamma * s_bits * lam + theta * phi) * p / phi


def optimal_mec_frequency(beta_km: float, s_bits: float, lam: float,
                          c_m: float, mu_m: float) -> float:
    """Raw stationary server frequency sqrt(beta*s*lambda*c_m / mu)."""
    if mu_m <= 0.0:
        raise ValueError("mu must be > 0 (floor it before calling)")
    return math.sqrt(beta_km * s_bits * lam * c_m / mu_m)


def allocate_mec_frequencies(beta: np.ndarray, s_bits: np.ndarray, Lambda: np.ndarray,
                             c_mec: np.ndarray, F_mec: np.ndarray, mu: np.ndarray,
                             mu_floor: float) -> np.ndarray:
    """Per-server closed-form frequencies with proportional capacity rescale."""
    mu_eff = np.maximum(mu, mu_floor)
    raw = np.sqrt(beta * s_bits[:, None] * Lambda * c_mec[None, :] / mu_eff[None, :])
    totals = raw.sum(axis=0)
    over = totals > F_mec
    scale = np.ones_like(totals)
    scale[over] = F_mec[over] / totals[over]
    return raw * scale[None, :]


def _cubic_root(a0: float, a3: float, a2: float, tol: float, max_iter: int) -> float:
    """Positive root of a0 - a3 f^3 - a2 f^2 = 0 (a0 > 0, a3 or a2 > 0).

    Secant iteration on the a0-normalized residual, kept inside a bracket
    with bisection fallback whenever a secant step escapes or stalls.
    """
    b3, b2 = a3 / a0, a2 / a0

    def h(f):
        return 1.0 - b3 * f ** 3 - b2 * f ** 2

    hi = math.inf
    if b3 > 0.0:
        hi = (1.0 / b3) ** (1.0 / 3.0)
    if b2 > 0.0:
        hi = min(hi, math.sqrt(1.0 / b2))
    lo, f_lo = 0.0, 1.0
    f_hi = h(hi)
    x0, h0 = lo, f_lo
    x1, h1 = hi, f_hi
    for _ in range(max_iter):
        if abs(h1) < tol:
            return x1
        denom = h1 - h0
        x2 = x1 - h1 * (x1 - x0) / denom if denom != 0.0 else 0.5 * (lo + hi)
        if not lo < x2 < hi:
            x2 = 0.5 * (lo + hi)
        h2 = h(x2)
        if h2 > 0.0:
            lo = x2
        else:
            hi = x2
        x0, h0 = x1, h1
        x1, h1 = x2, h2
    raise ArithmeticError("secant iteration on the frequency cubic did not converge")


def optimal_user_frequency(alpha_k: float, gamma_k: float, varphi_k: float,
                           eta: float, c: float, s_bits: float, lambda_sum: float,
                           F_local: float, secant_tol: float = 1e-10,
                           secant_max_iter: int = 80) -> float:
    """Stationary local CPU frequency from the cubic KKT condition.

    Solves alpha*c*s*(1-L) - 2*gamma*eta*(1-L)*s*c*f^3 - varphi*f^2 = 0 for
    f > 0 and clamps to (0, F_local].  Returns 0 when lambda_sum = 1 (no
    local work) or when the linear coefficient vanishes (alpha = 0); returns
    F_local when gamma = varphi = 0 with alpha > 0 (stationary point
    diverges, the cap is the boundary optimum).
    """
    residue = 1.0 - min(lambda_sum, 1.0)
    if residue <= 1e-15:
        return 0.0
    a0 = alpha_k * c * s_bits * residue
    a3 = 2.0 * gamma_k * eta * residue * s_bits * c
    a2 = varphi_k
    if a0 <= 0.0:
        return 0.0
    if a3 <= 0.0 and a2 <= 0.0:
        return F_local
    root = _cubic_root(a0, a3, a2, secant_tol, secant_max_iter)
    return min(root, F_local)


def update_phi(beta_km: float, gamma_k: float, psi_km: float, s_bits: float,
               lam: float, ptilde_km: float, rate_km: float,
               psi_floor: float) -> float:
    """Closed-form auxiliary rate bound for one pair.

    Active pairs get sqrt((beta*s*lam + s*lam*gamma*sum x ptilde)/psi)
    clamped into (0, achieved rate] whenever the achieved rate is positive;
    inactive pairs (lam = 0) adopt the achieved rate by convention.
    """
    if lam <= 0.0:
        return max(rate_km, PHI_MIN)
    psi_eff = max(psi_km, psi_floor)
    raw = math.sqrt((beta_km * s_bits * lam + s_bits * lam * gamma_k * ptilde_km) / psi_eff)
    if rate_km > 0.0:
        raw = min(raw, rate_km)
    return max(raw, PHI_MIN)


def allocate_subcarriers(config: SystemConfig, channels: ChannelState,
                         duals: DualState, Lambda: np.ndarray,
                         Phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Assign every subcarrier to the best-scoring candidate pair.

    Each candidate (k, m) is scored at its own closed-form optimal power;
    pairs with lambda = 0 cannot carry offload traffic and are excluded.
    Ties break to the lexicographically smallest (k, m).  Returns the
    assignment vector and the raw per-user power matrix (K, N).
    """
    K, N, M = config.K, config.N, config.M
    s = config.task_array("s_bits")
    p_max = config.task_array("p_max_W")
    h = channels.h_tilde
    g = channels.g_worst[:, :, None]

    cost = duals.gamma[:, None] * s[:, None] * Lambda + duals.theta[:, None] * Phi  # (K,M)
    phi_safe = np.maximum(Phi, PHI_MIN)
    capped = cost <= 0.0  # budget-capped pairs bypass the interior formula
    cost_safe = np.where(capped, 1.0, cost)
    ratio = (1.0 + duals.psi) * phi_safe * config.B_Hz / (cost_safe * LN2)

    diff = h - g
    hg = h * g
    with np.errstate(all="ignore"):
        disc = 4.0 * hg * diff * ratio[:, None, :] + diff * diff
        p_int = (np.sqrt(np.maximum(disc, 0.0)) - (h + g)) / (2.0 * hg)
        p_glim = ratio[:, None, :] - np.where(h > 0.0, 1.0 / np.maximum(h, 1e-300), np.inf)
        p = np.where(g == 0.0, p_glim, p_int)
        p = np.where(capped[:, None, :], p_max[:, None, None], p)
        p = np.where(h <= g, 0.0, p)
        p = np.maximum(np.nan_to_num(p, nan=0.0, posinf=0.0, neginf=0.0), 0.0)

    rate = config.B_Hz * (np.log2(1.0 + p * h) - np.log2(1.0 + p * g))
    score = (1.0 + duals.psi)[:, None, :] * rate - (cost / phi_safe)[:, None, :] * p
    mask = (Lambda > 0.0) & (Phi > 0.0)  # (K,M)
    score = np.where(mask[:, None, :], score, -np.inf)

    assign = np.full(N, UNASSIGNED, dtype=np.int64)
    Q = np.zeros((K, N))
    flat = score.transpose(1, 0, 2).reshape(N, K * M)  # per n, C-order over (k, m)
    has_candidate = np.isfinite(flat).any(axis=1)
    winners = np.argmax(np.where(np.isfinite(flat), flat, -np.inf), axis=1)
    for n in range(N):
        if not has_candidate[n]:
            continue
        j = int(winners[n])
        k, m = j // M, j % M
        assign[n] = j
        Q[k, n] = p[k, n, m]
    return assign, Q


# ---------------------------------------------------------------------------
# Lagrangian value and subgradients
# ---------------------------------------------------------------------------

def _residual_bundle(config: SystemConfig, channels: ChannelState,
                     alloc: Allocation, lenient: bool) -> Residuals:
    K, M = config.K, config.M
    tasks = config.tasks
    rates = achieved_rates(channels, alloc, config.B_Hz, clipped=False)
    ptilde = circuit_power_sums(alloc, tasks)
    x = alloc.indicator().astype(float)

    alpha = np.empty(K)
    gamma = np.empty(K)
    theta = np.empty(K)
    varphi = np.empty(K)
    beta = np.zeros((K, M))
    psi = np.zeros((K, M))
    for k in range(K):
        task = tasks[k]
        lam_row = alloc.Lambda[k]
        lam_sum = float(lam_row.sum())
        residue = 1.0 - min(lam_sum, 1.0)
        if residue > 0.0 and alloc.f_local[k] <= 0.0:
            if lenient:
                t_local = 0.0  # dual-side convention: f = 0 treated as no local work
            else:
                raise ValueError("f_local = 0 with local work remaining")
        else:
            t_local = (0.0 if residue == 0.0 else
                       task.c_cycles_per_bit * residue * task.s_bits / alloc.f_local[k])
        alpha[k] = t_local - task.T_max_s

        e_off = 0.0
        for m in range(M):
            lam = lam_row[m]
            if lam <= 0.0:
                continue  # vacuous rows for inactive pairs
            phi = alloc.Phi[k, m]
            if phi <= 0.0:
                raise ValueError("phi must be > 0 for an active pair")
            t_off = task.s_bits * lam / phi
            f_km = alloc.f_mec[k, m]
            if f_km <= 0.0:
                if lenient:
                    beta[k, m] = math.inf
                    continue
                raise ValueError("f_mec = 0 for an active pair")
            t_off += config.c_mec_cycles_per_bit[m] * task.s_bits * lam / f_km
            beta[k, m] = t_off - task.T_max_s
            e_off += task.s_bits * lam / phi * ptilde[k, m]

        gamma[k] = (local_energy(task, lam_sum, alloc.f_local[k]) + e_off
                    - task.E_budget_J)
        theta[k] = float((x[k].sum(axis=1) * alloc.Q[k]).sum()) - task.p_max_W
        varphi[k] = alloc.f_local[k] - task.F_local_Hz
    psi = alloc.Phi - rates
    mu = alloc.f_mec.sum(axis=0) - config.F_mec_Hz
    return Residuals(alpha=alpha, beta=beta, gamma=gamma, theta=theta,
                     mu=mu, psi=psi, varphi=varphi)


def subgradients(config: SystemConfig, channels: ChannelState,
                 alloc: Allocation) -> Residuals:
    """Constraint residuals at an allocation, one entry per multiplier.

    Residuals are lhs - rhs of each inequality; strictly feasible points
    yield all-nonpositive bundles.  Division guards mirror the latency and
    energy operations (an active pair with zero rate bound or frequency
    raises).  Inactive pairs contribute zero beta residuals.
    """
    return _residual_bundle(config, channels, alloc, lenient=False)


def lagrangian_value(config: SystemConfig, channels: ChannelState,
                     alloc: Allocation, duals: DualState) -> float:
    """Value of the dual Lagrangian at (allocation, multipliers).

    Equals the unclipped worst-case objective minus every multiplier times
    its constraint residual, so the value is affine in each multiplier with
    the residual as the coefficient.  Vacuous rows of inactive pairs are
    dropped, and f_local = 0 is treated as no local work (the evaluation
    never needs the infinite latency; feasibility handling lives elsewhere).
    """
    res = _residual_bundle(config, channels, alloc, lenient=True)
    rates = achieved_rates(channels, alloc, config.B_Hz, clipped=False)
    obj = float(rates.sum())
    beta_term = float((duals.beta * np.where(np.isfinite(res.beta), res.beta, 0.0)).sum())
    # An infinite beta residual means an active pair with zero server
    # frequency; its Lagrangian term is -inf in the limit.
    if np.isinf(res.beta[duals.beta > 0]).any():
        return -math.inf
    return (obj
            - float(duals.alpha @ res.alpha)
            - beta_term
            - float(duals.gamma @ res.gamma)
            - float(duals.theta @ res.theta)
            - float(duals.mu @ res.mu)
            - float((duals.psi * res.psi).sum())
            - float(duals.varphi @ res.varphi))


def update_multipliers(duals: DualState, residuals: Residuals, step: float) -> DualState:
    """Projected subgradient step: each multiplier <- max(m + step * r, 0)."""
    if step <= 0.0:
        raise ValueError("step must be > 0")
    return DualState(
        alpha=np.maximum(duals.alpha + step * residuals.alpha, 0.0),
        beta=np.maximum(duals.beta + step * residuals.beta, 0.0),
        gamma=np.maximum(duals.gamma + step * residuals.gamma, 0.0),
        theta=np.maximum(duals.theta + step * residuals.theta, 0.0),
        mu=np.maximum(duals.mu + step * residuals.mu, 0.0),
        psi=np.maximum(duals.psi + step * residuals.psi, 0.0),
        varphi=np.maximum(duals.varphi + step * residuals.varphi, 0.0),
    )


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

class _Engine:
    """One solve on one channel draw; owns all mutable state exclusively."""

    def __init__(self, config: SystemConfig, channels: ChannelState,
                 sc: SolverConfig, scheme: str, warm_start=()):
        self.config = config
        self.channels = channels
        self.sc = sc
        self.scheme = scheme
        self.warm_start = warm_start
        self.K, self.N, self.M = config.K, config.N, config.M
        self.s = config.task_array("s_bits")
        self.c = config.task_array("c_cycles_per_bit")
        self.T = config.task_array("T_max_s")
        self.E = config.task_array("E_budget_J")
        self.p_max = config.task_array("p_max_W")
        self.F_loc = config.task_array("F_local_Hz")
        self.eta = config.task_array("eta")
        self.c_mec = config.c_mec_cycles_per_bit
        self.F_mec = config.F_mec_Hz

    # -- helpers ------------------------------------------------------------

    def _alloc(self, assign, Q, Lambda, f_local, f_mec, Phi) -> Allocation:
        return Allocation(assign=assign, Q=Q, Lambda=Lambda, f_local=f_local,
                          f_mec=f_mec, Phi=Phi)

    def _rates(self, alloc: Allocation, clipped=False) -> np.ndarray:
        return achieved_rates(self.channels, alloc, self.config.B_Hz, clipped=clipped)

    def _objective(self, alloc: Allocation) -> float:
        return float(self._rates(alloc, clipped=True).sum())

    def _rescale_budget(self, assign: np.ndarray, Q: np.ndarray) -> np.ndarray:
        """Proportionally scale each user's powers down to its budget."""
        out = Q.copy()
        for k in range(self.K):
            used = sum(Q[k, n] for n, j in enumerate(assign)
                       if j != UNASSIGNED and j // self.M == k)
            if used > self.p_max[k]:
                out[k] *= self.p_max[k] / used
        return out

    def _project_powers(self, assign: np.ndarray, Qraw: np.ndarray,
                        Lambda: np.ndarray, Phi: np.ndarray,
                        duals: DualState) -> np.ndarray:
        """Water-filling projection of raw powers onto the per-user budget.

        Re-evaluates the closed-form power with the user's power multiplier
        shifted by tau >= 0, bisecting tau until the power sum meets the
        budget (the sum is monotone decreasing in tau).  A plain
        proportional rescale measurably underperforms a uniform split by
        pushing low-power subcarriers into the low-SNR regime, so candidate
        recovery uses this projection instead.
        """
        B = self.config.B_Hz
        out = np.zeros_like(Qraw)
        phi_safe = np.maximum(Phi, PHI_MIN)
        for k in range(self.K):
            ns = [n for n, j in enumerate(assign) if j != UNASSIGNED and j // self.M == k]
            if not ns:
                continue
            ms = [assign[n] % self.M for n in ns]
            h = self.channels.h_tilde[k, ns, ms]
            g = self.channels.g_worst[k, ns]
            phi_v = phi_safe[k, ms]
            psi_v = duals.psi[k, ms]
            base_cost = (duals.gamma[k] * self.s[k] * Lambda[k, ms]
                         + duals.theta[k] * phi_v)

            def powers(tau):
                with np.errstate(all="ignore"):
                    cost = base_cost + tau * phi_v
                    ratio = (1.0 + psi_v) * phi_v * B / (np.maximum(cost, 1e-300) * LN2)
                    diff = h - g
                    disc = 4.0 * h * g * diff * ratio + diff * diff
                    p = (np.sqrt(np.maximum(disc, 0.0)) - (h + g)) / (2.0 * h * g)
                    p = np.where(g == 0.0, ratio - 1.0 / np.maximum(h, 1e-300), p)
                    p = np.where(cost <= 0.0, self.p_max[k], p)
                    p = np.where(h <= g, 0.0, p)
                return np.maximum(np.nan_to_num(p, nan=0.0, posinf=0.0, neginf=0.0), 0.0)

            p0 = powers(0.0)
            if p0.sum() <= self.p_max[k]:
                out[k, ns] = p0
                continue
            lo, hi = 0.0, max(1.0, duals.theta[k])
            while powers(hi).sum() > self.p_max[k]:
                hi *= 2.0
                if hi > 1e30:
                    break
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if powers(mid).sum() > self.p_max[k]:
                    lo = mid
                else:
                    hi = mid
            out[k, ns] = powers(hi)
        return out

    def _solve_lambda(self, rates: np.ndarray, ptilde: np.ndarray,
                      f_local: np.ndarray, f_mec: np.ndarray) -> np.ndarray | None:
        problem = lp_mod.build_p1(self.config, rates, ptilde, f_local, f_mec,
                                  full_offload=(self.scheme == "FO"))
        objective = (np.ones(self.K * self.M)
                     if self.sc.lambda_objective == "max_offload" else None)
        point = lp_mod.find_feasible(problem, maximize=objective)
        if point is None:
            return None
        lam = point.reshape(self.K, self.M)
        lam[lam < 1e-12] = 0.0
        return lam

    def _init_assignment(self, mode: str):
        """Equal power p_max / N on a deterministic initial assignment."""
        if mode == "round_robin":
            assign = np.array([(n % (self.K * self.M)) for n in range(self.N)],
                              dtype=np.int64)
        else:  # best_rate: channel-aware argmax at the equal power level
            Q0 = np.tile((self.p_max / self.N)[:, None], (1, self.N))
            r = rate_table(self.channels, Q0, self.config.B_Hz)
            flat = r.transpose(1, 0, 2).reshape(self.N, self.K * self.M)
            assign = np.argmax(flat, axis=1).astype(np.int64)
        Q = np.zeros((self.K, self.N))
        for n, j in enumerate(assign):
            Q[j // self.M, n] = self.p_max[j // self.M] / self.N
        return assign, Q

    def _initial_states(self):
        """Candidate initial states for the first feasibility LP.

        The LP holds f_local fixed, which makes its energy row much more
        conservative than the joint problem (local energy scales with
        f_local^2), so a literal single-shot initialization yields false
        infeasibility verdicts.  Scan a few local-frequency levels, sized to
        finish a residue fraction of the task within the deadline, and fall
        back from the round-robin assignment to a channel-aware one.
        """
        f_mec = np.tile(self.F_mec / self.K, (self.K, 1))
        for mode in ("round_robin", "best_rate"):
            assign, Q = self._init_assignment(mode)
            if self.scheme == "FO":
                yield assign, Q, np.zeros(self.K), f_mec
                continue
            for residue in (1.0, 0.75, 0.5, 0.25, 0.1, 0.05):
                f_local = np.minimum(self.c * self.s * residue / self.T, self.F_loc)
                yield assign, Q, f_local, f_mec

    def _init_duals(self, rate_scale: float) -> DualState:
        v = _DUAL_INIT * rate_scale
        return DualState(
            alpha=v / self.T,
            beta=np.tile((v / self.T)[:, None], (1, self.M)),
            gamma=v / self.E,
            theta=v / self.p_max,
            mu=np.full(self.M, v) / self.F_mec,
            psi=np.full((self.K, self.M), _DUAL_INIT),
            varphi=v / self.F_loc,
        )

    def _dual_scales(self, rate_scale: float):
        psi_scale = max(rate_scale / self.K, self.config.B_Hz)
        return {
            "alpha": self.T, "beta": np.tile(self.T[:, None], (1, self.M)),
            "gamma": self.E, "theta": self.p_max, "mu": self.F_mec,
            "psi": np.full((self.K, self.M), psi_scale), "varphi": self.F_loc,
        }

    def _scaled_residuals(self, res: Residuals, scales, rate_scale: float) -> Residuals:
        def prep(r, scale):
            normalized = np.clip(np.nan_to_num(r / scale, nan=0.0,
                                               posinf=_RES_CLIP, neginf=-_RES_CLIP),
                                 -_RES_CLIP, _RES_CLIP)
            return normalized * rate_scale / scale

        return Residuals(**{name: prep(getattr(res, name), scales[name])
                            for name in ("alpha", "beta", "gamma", "theta",
                                         "mu", "psi", "varphi")})

    def _normalized(self, duals: DualState, scales, rate_scale: float) -> np.ndarray:
        parts = [getattr(duals, name) * scales[name] / rate_scale
                 for name in ("alpha", "beta", "gamma", "theta", "mu", "psi", "varphi")]
        return np.concatenate([np.ravel(p) for p in parts])

    # -- EPA uniform power --------------------------------------------------

    def _uniform_powers(self, assign: np.ndarray, rho: float = 1.0) -> np.ndarray:
        Q = np.zeros((self.K, self.N))
        counts = np.zeros(self.K, dtype=int)
        for j in assign:
            if j != UNASSIGNED:
                counts[j // self.M] += 1
        for n, j in enumerate(assign):
            if j != UNASSIGNED:
                k = j // self.M
                Q[k, n] = rho * self.p_max[k] / counts[k]
        return Q

    def _allocate_uniform(self, duals: DualState, Lambda: np.ndarray,
                          Phi: np.ndarray, q_level: np.ndarray):
        """EPA subcarrier rule: same scores, evaluated at the uniform level."""
        h = self.channels.h_tilde
        g = self.channels.g_worst[:, :, None]
        p = np.broadcast_to(q_level[:, None, None], h.shape)
        rate = self.config.B_Hz * (np.log2(1.0 + p * h) - np.log2(1.0 + p * g))
        cost = duals.gamma[:, None] * self.s[:, None] * Lambda + duals.theta[:, None] * Phi
        phi_safe = np.maximum(Phi, PHI_MIN)
        score = (1.0 + duals.psi)[:, None, :] * rate - (cost / phi_safe)[:, None, :] * p
        mask = (Lambda > 0.0) & (Phi > 0.0)
        score = np.where(mask[:, None, :], score, -np.inf)
        flat = score.transpose(1, 0, 2).reshape(self.N, self.K * self.M)
        assign = np.full(self.N, UNASSIGNED, dtype=np.int64)
        has = np.isfinite(flat).any(axis=1)
        winners = np.argmax(np.where(np.isfinite(flat), flat, -np.inf), axis=1)
        assign[has] = winners[has]
        return assign, self._uniform_powers(assign)

    # -- candidate construction ----------------------------------------------

    def _candidate(self, assign, Qraw, f_local, f_mec, lam, phi, duals):
        """Budget-projected, LP-repaired primal allocation.

        Returns (objective, allocation, violations); the first two are None
        when no feasible repair exists.  EPA probes descending uniform power
        levels and keeps the largest feasible one.
        """
        if self.scheme == "EPA":
            last = (None, None, [])
            for rho in (1.0, 0.7, 0.5, 0.3, 0.15):
                Q = self._uniform_powers(assign, rho)
                last = self._finish_candidate(assign, Q, f_local, f_mec)
                if last[1] is not None:
                    return last
            return last
        Q = self._project_powers(assign, Qraw, lam, phi, duals)
        return self._finish_candidate(assign, Q, f_local, f_mec)

    def _finish_candidate(self, assign, Q, f_local, f_mec):
        probe = self._alloc(assign, Q, np.zeros((self.K, self.M)), f_local,
                            f_mec, np.full((self.K, self.M), PHI_MIN))
        rates = self._rates(probe)
        ptilde = circuit_power_sums(probe, self.config.tasks)
        lam = self._solve_lambda(rates, ptilde, f_local, f_mec)
        if lam is None:
            return None, None, []
        phi = np.maximum(rates, PHI_MIN)
        alloc = self._alloc(assign.copy(), Q, lam, f_local.copy(), f_mec.copy(), phi)
        violations = check_feasibility(self.config, self.channels, alloc,
                                       tol_rel=self.sc.tol_rel)
        if violations:
            return None, None, violations  # defensive; repair should not produce these
        return self._objective(alloc), alloc, []

    # -- main loop ------------------------------------------------------------

    def run(self) -> SolveResult:
        sc = self.sc
        lam = None
        for assign, Qraw, f_local, f_mec in self._initial_states():
            state = self._alloc(assign, Qraw, np.zeros((self.K, self.M)), f_local,
                                f_mec, np.full((self.K, self.M), PHI_MIN))
            rates = self._rates(state)
            ptilde = circuit_power_sums(state, self.config.tasks)
            lam = self._solve_lambda(rates, ptilde, f_local, f_mec)
            if lam is not None:
                break
        if lam is None:
            raise InfeasibleError(
                f"{self.scheme}: no feasible offload fractions for any initial state")
        phi = np.maximum(rates, PHI_MIN)

        rate_scale = max(float(np.maximum(rates, 0.0).sum()),
                         self.K * self.config.B_Hz)
        duals = self._init_duals(rate_scale)
        scales = self._dual_scales(rate_scale)

        best_obj = -math.inf
        best_alloc = None
        init_alloc = self._alloc(assign.copy(), Qraw.copy(), lam.copy(),
                                 f_local.copy(), f_mec.copy(), phi.copy())
        if not check_feasibility(self.config, self.channels, init_alloc, sc.tol_rel):
            best_obj, best_alloc = self._objective(init_alloc), init_alloc
        for warm in self.warm_start:
            if not check_feasibility(self.config, self.channels, warm, sc.tol_rel):
                obj = self._objective(warm)
                if obj > best_obj:
                    best_obj, best_alloc = obj, warm.copy()

        trace = ConvergenceTrace()
        global_t = 0
        prev_outer = None
        converged = False
        outer_done = 0
        q_level = self.p_max / self.N  # EPA uniform level

        for z in range(sc.z_max):
            outer_done = z + 1
            if z > 0:
                # Refresh the offload fractions with the latest projected rates.
                Q_res = self._project_powers(assign, Qraw, lam, phi, duals)
                probe = self._alloc(assign, Q_res, lam, f_local, f_mec, phi)
                lam_new = self._solve_lambda(self._rates(probe),
                                             circuit_power_sums(probe, self.config.tasks),
                                             f_local, f_mec)
                if lam_new is not None:
                    lam = lam_new

            for _ in range(sc.dual_max):
                prev_L = None
                L = -math.inf
                for _ in range(sc.inner_max):
                    if self.scheme == "EPA":
                        assign, Qraw = self._allocate_uniform(duals, lam, phi, q_level)
                        counts = np.bincount(
                            [j // self.M for j in assign if j != UNASSIGNED],
                            minlength=self.K)
                        q_level = self.p_max / np.maximum(counts, 1)
                    else:
                        assign, Qraw = allocate_subcarriers(self.config, self.channels,
                                                            duals, lam, phi)
                    f_mec = allocate_mec_frequencies(duals.beta, self.s, lam,
                                                     self.c_mec, self.F_mec,
                                                     duals.mu, sc.mu_floor)
                    f_mec = np.where((lam > 0) & (f_mec <= 0.0),
                                     _F_MEC_MIN_FRAC * self.F_mec[None, :], f_mec)
                    if self.scheme != "FO":
                        f_local = np.array([
                            optimal_user_frequency(duals.alpha[k], duals.gamma[k],
                                                   duals.varphi[k], self.eta[k],
                                                   self.c[k], self.s[k],
                                                   float(lam[k].sum()), self.F_loc[k],
                                                   sc.secant_tol, sc.secant_max_iter)
                            for k in range(self.K)])
                        lam_sums = lam.sum(axis=1)
                        f_local = np.where((lam_sums < 1.0) & (f_local <= 0.0),
                                           1e-6 * self.F_loc, f_local)
                    state = self._alloc(assign, Qraw, lam, f_local, f_mec, phi)
                    rates = self._rates(state)
                    ptilde = circuit_power_sums(state, self.config.tasks)
                    phi = np.array([[update_phi(duals.beta[k, m], duals.gamma[k],
                                                duals.psi[k, m], self.s[k],
                                                lam[k, m], ptilde[k, m],
                                                rates[k, m], sc.psi_floor)
                                     for m in range(self.M)] for k in range(self.K)])
                    state = self._alloc(assign, Qraw, lam, f_local, f_mec, phi)
                    L = lagrangian_value(self.config, self.channels, state, duals)
                    if prev_L is not None and abs(L - prev_L) <= sc.eps1 * (1.0 + abs(prev_L)):
                        break
                    prev_L = L

                obj_c, alloc_c, viols = self._candidate(assign, Qraw, f_local,
                                                        f_mec, lam, phi, duals)
                if alloc_c is not None:
                    max_viol = 0.0
                    if obj_c > best_obj:
                        best_obj, best_alloc = obj_c, alloc_c
                else:
                    max_viol = max((v.magnitude for v in viols), default=math.inf)

                global_t += 1
                trace.points.append(TracePoint(
                    iteration=global_t, dual_value=L,
                    best_primal_bps=best_obj if best_alloc is not None else math.nan,
                    max_violation=max_viol))

                res = subgradients(self.config, self.channels, state)
                step = (sc.step0 / math.sqrt(global_t)
                        if sc.step_rule == "diminishing" else sc.step0)
                before = self._normalized(duals, scales, rate_scale)
                duals = update_multipliers(
                    duals, self._scaled_residuals(res, scales, rate_scale), step)
                if self.scheme == "FO":
                    duals.alpha[:] = 0.0
                    duals.varphi[:] = 0.0
                after = self._normalized(duals, scales, rate_scale)
                if np.abs(after - before).max() < _DUAL_MOVE_TOL:
                    break

            outer_obj = best_obj if best_alloc is not None else self._objective(state)
            if prev_outer is not None and abs(outer_obj - prev_outer) <= sc.eps1 * max(
                    1.0, abs(prev_outer)):
                converged = True
                break
            prev_outer = outer_obj

        trace.converged = converged
        if best_alloc is None:
            raise InfeasibleError(f"{self.scheme}: no feasible allocation encountered")
        metrics = compute_metrics(self.config, self.channels, best_alloc)
        return SolveResult(allocation=best_alloc, metrics=metrics, trace=trace,
                           converged=converged, outer_iters=outer_done,
                           scheme=self.scheme)


def solve(config: SystemConfig, channels: ChannelState,
          solver_config: SolverConfig | None = None,
          warm_start=()) -> SolveResult:
    """Run the full dual-decomposition solver (the PA scheme).

    ``warm_start`` may carry feasible allocations (for example baseline
    results on the same draw) that seed the best-feasible stream; the
    returned allocation is never worse than any of them.
    """
    sc = solver_config or SolverConfig()
    return _Engine(config, channels, sc, "PA", warm_start=warm_start).run()
