"""Reference schemes: equal power allocation (EPA) and full offloading (FO).

Both reuse the dual-decomposition loop.  EPA replaces the closed-form power
step with a uniform split of the largest feasible power level over the
user's assigned subcarriers (subcarrier assignment itself still follows the
score rule, evaluated at the uniform level, so the comparison isolates power
allocation).  FO pins sum_m lambda = 1 per user, zeroes the local CPU, skips
the local-frequency block and drops its two multiplier families.
"""

from __future__ import annotations

from .model import ChannelState, SystemConfig
from .optimizer import SolveResult, SolverConfig, _Engine


def solve_epa(config: SystemConfig, channels: ChannelState,
              solver_config: SolverConfig | None = None,
              warm_start=()) -> SolveResult:
    """Equal-power-allocation baseline on one channel draw."""
    sc = solver_config or SolverConfig()
    return _Engine(config, channels, sc, "EPA", warm_start=warm_start).run()


def solve_fo(config: SystemConfig, channels: ChannelState,
             solver_config: SolverConfig | None = None,
             warm_start=()) -> SolveResult:
    """Full-offloading baseline; raises InfeasibleError when full offload
    cannot meet the latency or energy budgets."""
    sc = solver_config or SolverConfig()
    return _Engine(config, channels, sc, "FO", warm_start=warm_start).run()
