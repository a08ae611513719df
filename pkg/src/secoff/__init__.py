"""Worst-case secrecy offloading rate maximization for OFDMA MEC networks."""

from .model import (
    Allocation,
    ChannelState,
    InfeasibleError,
    Metrics,
    SystemConfig,
    TaskSpec,
    check_feasibility,
    compute_metrics,
    secrecy_rate_subcarrier,
)
from .channel import ChannelConfig, generate
from .optimizer import DualState, SolveResult, SolverConfig, solve
from .baselines import solve_epa, solve_fo

__all__ = [
    "Allocation", "ChannelConfig", "ChannelState", "DualState",
    "InfeasibleError", "Metrics", "SolveResult", "SolverConfig",
    "SystemConfig", "TaskSpec", "check_feasibility", "compute_metrics",
    "generate", "secrecy_rate_subcarrier", "solve", "solve_epa", "solve_fo",
]

__version__ = "0.1.0"
