"""Domain types and closed-form rate/latency/energy expressions.

All quantities are SI (watts, hertz, joules, seconds, bits, CPU cycles).
Unit-suffixed convenience keys (mW, kHz, GHz) are converted at config
ingestion in :mod:`secoff.harness`, never here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LN2 = math.log(2.0)

#: Index value used in assignment vectors for an unassigned subcarrier.
UNASSIGNED = -1


class InfeasibleError(Exception):
    """Raised when a problem instance admits no feasible allocation."""


@dataclass(frozen=True)
class TaskSpec:
    """Per-user task and device parameters.

    s_bits            task input size (bits)
    c_cycles_per_bit  local CPU cycles needed per input bit
    T_max_s           latency budget (s)
    E_budget_J        energy budget (J)
    p_max_W           maximum transmit power (W)
    p_circuit_W       constant circuit power added per active subcarrier (W)
    F_local_Hz        maximum local CPU frequency (cycles/s)
    eta               computation energy-efficiency coefficient (J*s^2/cycle^3)
    """

    s_bits: float
    c_cycles_per_bit: float
    T_max_s: float
    E_budget_J: float
    p_max_W: float
    p_circuit_W: float
    F_local_Hz: float
    eta: float

    def __post_init__(self):
        for name in (
            "s_bits", "c_cycles_per_bit", "T_max_s", "E_budget_J",
            "p_max_W", "p_circuit_W", "F_local_Hz", "eta",
        ):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"TaskSpec.{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class SystemConfig:
    """Network-level dimensions and per-node parameters."""

    K: int
    M: int
    N: int
    B_Hz: float
    sigma2_W: float
    c_mec_cycles_per_bit: np.ndarray  # (M,)
    F_mec_Hz: np.ndarray  # (M,)
    tasks: tuple  # K TaskSpec entries

    def __post_init__(self):
        if min(self.K, self.M, self.N) < 1:
            raise ValueError("K, M, N must all be >= 1")
        if not (self.B_Hz > 0.0 and self.sigma2_W > 0.0):
            raise ValueError("B_Hz and sigma2_W must be > 0")
        object.__setattr__(self, "c_mec_cycles_per_bit",
                           np.asarray(self.c_mec_cycles_per_bit, dtype=float))
        object.__setattr__(self, "F_mec_Hz", np.asarray(self.F_mec_Hz, dtype=float))
        if self.c_mec_cycles_per_bit.shape != (self.M,) or self.F_mec_Hz.shape != (self.M,):
            raise ValueError("c_mec_cycles_per_bit and F_mec_Hz must have shape (M,)")
        if not (self.F_mec_Hz > 0.0).all() or not (self.c_mec_cycles_per_bit > 0.0).all():
            raise ValueError("server capacities and cycles/bit must be > 0")
        if len(self.tasks) != self.K:
            raise ValueError("tasks must hold exactly K TaskSpec entries")
        object.__setattr__(self, "tasks", tuple(self.tasks))

    # Convenience per-user vectors (computed once, cached on first use).
    def task_array(self, name: str) -> np.ndarray:
        return np.array([getattr(t, name) for t in self.tasks], dtype=float)


@dataclass(frozen=True)
class ChannelState:
    """Worst-case-ready channel gains normalized by noise power.

    h_tilde[k, n, m] legitimate channel-power-to-noise ratio (1/W)
    g_bar[k, n]      estimated eavesdropper channel-power-to-noise ratio (1/W)
    eps              deterministic CSI uncertainty bound (1/W)
    sigma2_W         noise power used for the normalization (W)
    """

    h_tilde: np.ndarray
    g_bar: np.ndarray
    eps: float
    sigma2_W: float

    def __post_init__(self):
        object.__setattr__(self, "h_tilde", np.asarray(self.h_tilde, dtype=float))
        object.__setattr__(self, "g_bar", np.asarray(self.g_bar, dtype=float))
        if self.h_tilde.ndim != 3 or self.g_bar.ndim != 2:
            raise ValueError("h_tilde must be (K,N,M) and g_bar (K,N)")
        if not np.isfinite(self.h_tilde).all() or (self.h_tilde < 0).any():
            raise ValueError("h_tilde entries must be finite and >= 0")
        if (self.g_bar < 0).any() or self.eps < 0:
            raise ValueError("g_bar and eps must be >= 0")

    @property
    def g_worst(self) -> np.ndarray:
        """Eavesdropper ratio at the uncertainty-bound maximum, shape (K, N)."""
        return self.g_bar + self.eps


@dataclass
class Allocation:
    """Full primal decision.

    assign[n] is the index k * M + m of the user-server pair holding
    subcarrier n, or UNASSIGNED.  The dense indicator x[k, n, m] is derived,
    unless an explicit ``x_dense`` is supplied (used by tests to construct
    exclusivity violations the vector form cannot express).
    """

    assign: np.ndarray  # (N,) int
    Q: np.ndarray  # (K, N) transmit powers, W
    Lambda: np.ndarray  # (K, M) offload fractions
    f_local: np.ndarray  # (K,) cycles/s
    f_mec: np.ndarray  # (K, M) cycles/s
    Phi: np.ndarray  # (K, M) auxiliary rate lower bounds, bits/s
    x_dense: np.ndarray | None = None  # optional (K, N, M) indicator override

    def __post_init__(self):
        self.assign = np.asarray(self.assign, dtype=np.int64)
        self.Q = np.asarray(self.Q, dtype=float)
        self.Lambda = np.asarray(self.Lambda, dtype=float)
        self.f_local = np.asarray(self.f_local, dtype=float)
        self.f_mec = np.asarray(self.f_mec, dtype=float)
        self.Phi = np.asarray(self.Phi, dtype=float)
        if self.x_dense is not None:
            self.x_dense = np.asarray(self.x_dense, dtype=np.uint8)

    @property
    def K(self) -> int:
        return self.Q.shape[0]

    @property
    def N(self) -> int:
        return self.Q.shape[1]

    @property
    def M(self) -> int:
        return self.Lambda.shape[1]

    def indicator(self) -> np.ndarray:
        """Dense subcarrier indicator x[k, n, m] in {0, 1}."""
        if self.x_dense is not None:
            return self.x_dense
        x = np.zeros((self.K, self.N, self.M), dtype=np.uint8)
        for n, j in enumerate(self.assign):
            if j != UNASSIGNED:
                x[j // self.M, n, j % self.M] = 1
        return x

    def copy(self) -> "Allocation":
        return Allocation(self.assign.copy(), self.Q.copy(), self.Lambda.copy(),
                          self.f_local.copy(), self.f_mec.copy(), self.Phi.copy(),
                          None if self.x_dense is None else self.x_dense.copy())


@dataclass(frozen=True)
class Metrics:
    """Reported per-run quantities (clipped worst-case rates)."""

    sum_secrecy_rate_bps: float
    per_user_rate_bps: np.ndarray
    local_computing_ratio: float
    per_user_energy_J: np.ndarray
    per_user_latency_s: np.ndarray


@dataclass(frozen=True)
class Violation:
    """One violated constraint row: name, index tuple, relative magnitude."""

    name: str
    index: tuple
    magnitude: float


def secrecy_rate_subcarrier(p: float, h_tilde: float, g_bar: float, eps: float,
                            B: float, clipped: bool = True) -> float:
    """Worst-case per-subcarrier secrecy rate in bits/s.

    Evaluates B*(log2(1 + p*h_tilde) - log2(1 + p*(g_bar + eps))), floored
    at zero when ``clipped``.  The unclipped value is the surrogate the
    solver maximizes; all reported metrics clip.
    """
    if p < 0:
        raise ValueError("transmit power must be >= 0")
    if B <= 0:
        raise ValueError("bandwidth must be > 0")
    if h_tilde <= 0:
        raise ValueError("h_tilde must be > 0")
    if g_bar < 0 or eps < 0:
        raise ValueError("g_bar and eps must be >= 0")
    g = g_bar + eps
    r = B * (math.log2(1.0 + p * h_tilde) - math.log2(1.0 + p * g))
    return max(r, 0.0) if clipped else r


def rate_table(channels: ChannelState, Q: np.ndarray, B: float,
               clipped: bool = False) -> np.ndarray:
    """Per-(k, n, m) worst-case secrecy rates for the power matrix Q (K, N)."""
    p = Q[:, :, None]
    g = channels.g_worst[:, :, None]
    r = B * (np.log2(1.0 + p * channels.h_tilde) - np.log2(1.0 + p * g))
    return np.maximum(r, 0.0) if clipped else r


def achieved_rates(channels: ChannelState, alloc: Allocation, B: float,
                   clipped: bool = False) -> np.ndarray:
    """Per-pair achieved rate sum_n x * r, shape (K, M)."""
    r = rate_table(channels, alloc.Q, B, clipped=clipped)
    return np.einsum("knm,knm->km", alloc.indicator().astype(float), r)


def circuit_power_sums(alloc: Allocation, tasks) -> np.ndarray:
    """sum_n x * (p + p_circuit) per pair, shape (K, M)."""
    x = alloc.indicator().astype(float)
    p_circ = np.array([t.p_circuit_W for t in tasks])
    ptilde = alloc.Q[:, :, None] + p_circ[:, None, None]
    return np.einsum("knm,knm->km", x, ptilde)


def local_latency(task: TaskSpec, lambda_sum: float, f_local: float) -> float:
    """Local computing time for the task residue, in seconds.

    Exactly 0 when lambda_sum == 1 (nothing left to compute locally),
    regardless of f_local.
    """
    if not 0.0 <= lambda_sum <= 1.0 + 1e-12:
        raise ValueError("lambda_sum must lie in [0, 1]")
    residue = 1.0 - min(lambda_sum, 1.0)
    if residue == 0.0:
        return 0.0
    if f_local <= 0.0:
        raise ValueError("f_local must be > 0 when local work remains")
    return task.c_cycles_per_bit * residue * task.s_bits / f_local


def offload_latency(s_bits: float, lambda_km: float, rate: float,
                    c_m: float, f_mec: float) -> float:
    """Secure transmission time plus server computing time, in seconds."""
    if lambda_km < 0:
        raise ValueError("lambda_km must be >= 0")
    if lambda_km == 0.0:
        return 0.0
    if rate <= 0.0 or f_mec <= 0.0:
        raise ValueError("rate and f_mec must be > 0 for an active pair")
    return s_bits * lambda_km / rate + c_m * s_bits * lambda_km / f_mec


def local_energy(task: TaskSpec, lambda_sum: float, f_local: float) -> float:
    """Local computing energy eta*c*(1-sum lambda)*s*f^2, in joules."""
    if not 0.0 <= lambda_sum <= 1.0 + 1e-12:
        raise ValueError("lambda_sum must lie in [0, 1]")
    residue = 1.0 - min(lambda_sum, 1.0)
    return task.eta * task.c_cycles_per_bit * residue * task.s_bits * f_local ** 2


def offload_energy(task: TaskSpec, lambda_row: np.ndarray, rates_row: np.ndarray,
                   ptilde_row: np.ndarray) -> float:
    """Transmit energy sum_m (s*lambda/r) * sum_n x*(p + p_circuit), in joules.

    ``ptilde_row[m]`` is the precomputed per-pair power sum including the
    circuit term; ``rates_row[m]`` the per-pair achieved rate.
    """
    total = 0.0
    for m in range(len(lambda_row)):
        lam = lambda_row[m]
        if lam == 0.0:
            continue
        if rates_row[m] <= 0.0:
            raise ValueError(f"active pair m={m} has non-positive achieved rate")
        total += task.s_bits * lam / rates_row[m] * ptilde_row[m]
    return total


def _rel(excess: float, scale: float) -> float:
    return excess / max(abs(scale), 1e-300)


def check_feasibility(config: SystemConfig, channels: ChannelState,
                      alloc: Allocation, tol_rel: float = 1e-6) -> list:
    """Evaluate every constraint of the joint problem and report violations.

    Latency and energy rows use the achieved unclipped worst-case rates; the
    auxiliary bounds check phi in (0, achieved rate] for active pairs only.
    An empty list means feasible within ``tol_rel`` (relative to each
    constraint's own scale).  Never raises: impossible rows (zero rate or
    frequency with positive load) are reported with infinite magnitude.
    """
    out: list[Violation] = []
    K, M = config.K, config.M
    rates = achieved_rates(channels, alloc, config.B_Hz, clipped=False)
    ptilde = circuit_power_sums(alloc, config.tasks)

    # Subcarrier exclusivity: at most one (k, m) pair per subcarrier.
    x = alloc.indicator()
    per_n = x.sum(axis=(0, 2))
    for n in range(alloc.N):
        if per_n[n] > 1:
            out.append(Violation("subcarrier_exclusivity", (n,), float(per_n[n] - 1)))
    for n, j in enumerate(alloc.assign):
        if j != UNASSIGNED and not 0 <= j < K * M:
            out.append(Violation("subcarrier_assignment_range", (n,), math.inf))

    for k in range(K):
        task = config.tasks[k]
        lam_row = alloc.Lambda[k]
        lam_sum = float(lam_row.sum())

        # Offload fraction simplex bounds.
        for m in range(M):
            if lam_row[m] < -tol_rel:
                out.append(Violation("lambda_nonneg", (k, m), -lam_row[m]))
            if lam_row[m] > 1.0 + tol_rel:
                out.append(Violation("lambda_le_one", (k, m), lam_row[m] - 1.0))
        if lam_sum > 1.0 + tol_rel:
            out.append(Violation("lambda_sum", (k,), lam_sum - 1.0))

        # Transmit power bounds.
        for n in range(alloc.N):
            if alloc.Q[k, n] < -tol_rel * task.p_max_W:
                out.append(Violation("power_nonneg", (k, n),
                                     _rel(-alloc.Q[k, n], task.p_max_W)))
        p_sum = float((x[k].sum(axis=1) * alloc.Q[k]).sum())
        if p_sum > task.p_max_W * (1.0 + tol_rel):
            out.append(Violation("power_budget", (k,),
                                 _rel(p_sum - task.p_max_W, task.p_max_W)))

        # Local frequency box.
        if alloc.f_local[k] < -tol_rel * task.F_local_Hz:
            out.append(Violation("f_local_nonneg", (k,),
                                 _rel(-alloc.f_local[k], task.F_local_Hz)))
        if alloc.f_local[k] > task.F_local_Hz * (1.0 + tol_rel):
            out.append(Violation("f_local_cap", (k,),
                                 _rel(alloc.f_local[k] - task.F_local_Hz, task.F_local_Hz)))

        # Latency: max of local time and every active pair's offload time.
        residue = 1.0 - min(lam_sum, 1.0)
        if residue > 0.0 and alloc.f_local[k] <= 0.0:
            out.append(Violation("latency", (k,), math.inf))
            t_local = math.inf
        else:
            t_local = (0.0 if residue == 0.0 else
                       task.c_cycles_per_bit * residue * task.s_bits / alloc.f_local[k])
            if t_local > task.T_max_s * (1.0 + tol_rel):
                out.append(Violation("latency_local", (k,),
                                     _rel(t_local - task.T_max_s, task.T_max_s)))
        for m in range(M):
            lam = lam_row[m]
            if lam <= 0.0:
                continue
            if rates[k, m] <= 0.0 or alloc.f_mec[k, m] <= 0.0:
                out.append(Violation("latency_offload", (k, m), math.inf))
                continue
            t_off = (task.s_bits * lam / rates[k, m]
                     + config.c_mec_cycles_per_bit[m] * task.s_bits * lam / alloc.f_mec[k, m])
            if t_off > task.T_max_s * (1.0 + tol_rel):
                out.append(Violation("latency_offload", (k, m),
                                     _rel(t_off - task.T_max_s, task.T_max_s)))

        # Energy budget.
        e_local = task.eta * task.c_cycles_per_bit * residue * task.s_bits * alloc.f_local[k] ** 2
        e_off = 0.0
        for m in range(M):
            lam = lam_row[m]
            if lam <= 0.0:
                continue
            if rates[k, m] <= 0.0:
                e_off = math.inf
                break
            e_off += task.s_bits * lam / rates[k, m] * ptilde[k, m]
        e_total = e_local + e_off
        if e_total > task.E_budget_J * (1.0 + tol_rel):
            mag = math.inf if math.isinf(e_total) else _rel(e_total - task.E_budget_J,
                                                            task.E_budget_J)
            out.append(Violation("energy", (k,), mag))

        # Auxiliary rate lower bounds for active pairs.
        for m in range(M):
            if lam_row[m] <= 0.0:
                continue
            phi = alloc.Phi[k, m]
            if phi <= 0.0:
                out.append(Violation("phi_positive", (k, m), math.inf))
            elif phi > rates[k, m] + tol_rel * max(abs(rates[k, m]), 1.0):
                out.append(Violation("phi_rate_bound", (k, m),
                                     _rel(phi - rates[k, m], max(abs(rates[k, m]), 1.0))))

    # Server frequency bounds and capacities.
    for k in range(K):
        for m in range(M):
            if alloc.f_mec[k, m] < -tol_rel * config.F_mec_Hz[m]:
                out.append(Violation("f_mec_nonneg", (k, m),
                                     _rel(-alloc.f_mec[k, m], config.F_mec_Hz[m])))
    for m in range(M):
        used = float(alloc.f_mec[:, m].sum())
        if used > config.F_mec_Hz[m] * (1.0 + tol_rel):
            out.append(Violation("server_capacity", (m,),
                                 _rel(used - config.F_mec_Hz[m], config.F_mec_Hz[m])))

    return out


def compute_metrics(config: SystemConfig, channels: ChannelState,
                    alloc: Allocation) -> Metrics:
    """Clipped-rate metrics of an allocation (the reported quantities)."""
    rates_clip = achieved_rates(channels, alloc, config.B_Hz, clipped=True)
    ptilde = circuit_power_sums(alloc, config.tasks)
    K, M = config.K, config.M
    per_rate = rates_clip.sum(axis=1)
    per_energy = np.zeros(K)
    per_latency = np.zeros(K)
    for k in range(K):
        task = config.tasks[k]
        lam_row = alloc.Lambda[k]
        lam_sum = float(lam_row.sum())
        residue = 1.0 - min(lam_sum, 1.0)
        t_local = 0.0
        if residue > 0.0:
            t_local = (math.inf if alloc.f_local[k] <= 0.0 else
                       task.c_cycles_per_bit * residue * task.s_bits / alloc.f_local[k])
        t_off = 0.0
        e_off = 0.0
        for m in range(M):
            lam = lam_row[m]
            if lam <= 0.0:
                continue
            if rates_clip[k, m] <= 0.0 or alloc.f_mec[k, m] <= 0.0:
                t_off = math.inf
                e_off = math.inf
                break
            t_off = max(t_off, task.s_bits * lam / rates_clip[k, m]
                        + config.c_mec_cycles_per_bit[m] * task.s_bits * lam / alloc.f_mec[k, m])
            e_off += task.s_bits * lam / rates_clip[k, m] * ptilde[k, m]
        per_latency[k] = max(t_local, t_off)
        per_energy[k] = local_energy(task, lam_sum, alloc.f_local[k]) + e_off
    lcr = float(np.mean([1.0 - min(float(alloc.Lambda[k].sum()), 1.0) for k in range(K)]))
    return Metrics(
        sum_secrecy_rate_bps=float(per_rate.sum()),
        per_user_rate_bps=per_rate,
        local_computing_ratio=lcr,
        per_user_energy_J=per_energy,
        per_user_latency_s=per_latency,
    )
