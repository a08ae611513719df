"""Channel realization generator: distance pathloss times Rayleigh fading.

Fading is modeled on channel power as a unit-mean exponential draw, which is
the power distribution of a Rayleigh amplitude.  The eavesdropper estimate
g_bar follows the same law from its own distances; only the worst case
g_bar + eps is ever consumed downstream.

RNG contract: numpy Philox (counter-based, ``numpy.random.Philox``), keyed by
the scenario seed.  Draw order is fixed and documented below, so identical
seeds reproduce bit-exact states and other implementations can match streams
or substitute JSON fixtures (see :mod:`secoff.harness`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelState, SystemConfig

FADING_MODES = ("rayleigh", "unit")


@dataclass(frozen=True)
class ChannelConfig:
    """Pathloss and CSI-uncertainty parameters.

    ``beta0`` is the dimensionless reference gain at distance ``d0_m``
    (-30 dB by default).  ``eps`` bounds the eavesdropper
    channel-power-to-noise estimation error, in 1/W.  Distances may be given
    explicitly; when None they are drawn uniformly from ``dist_range_m``
    using the scenario seed.
    """

    beta0: float = 1e-3
    d0_m: float = 1.0
    pathloss_exp: float = 2.1
    eps: float = 0.0
    dist_user_mec_m: np.ndarray | None = None  # (K, M)
    dist_user_eve_m: np.ndarray | None = None  # (K,)
    fading_mode: str = "rayleigh"
    dist_range_m: tuple = (50.0, 55.0)

    def __post_init__(self):
        if self.beta0 <= 0 or self.pathloss_exp <= 0 or self.d0_m <= 0:
            raise ValueError("beta0, d0_m and pathloss_exp must be > 0")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.fading_mode not in FADING_MODES:
            raise ValueError(f"fading_mode must be one of {FADING_MODES}")
        for name in ("dist_user_mec_m", "dist_user_eve_m"):
            d = getattr(self, name)
            if d is not None:
                object.__setattr__(self, name, np.asarray(d, dtype=float))


def generate(config: ChannelConfig, system: SystemConfig, seed: int) -> ChannelState:
    """Draw one channel state.  Deterministic given (config, system, seed).

    Draw order from the Philox stream: user-server distances (K, M) then
    user-eavesdropper distances (K,), each only when not supplied in the
    config; then server-link fading (K, N, M); then eavesdropper-link
    fading (K, N).  Unit mode skips the fading draws entirely.
    """
    K, N, M = system.K, system.N, system.M
    rng = np.random.Generator(np.random.Philox(key=seed))

    lo, hi = config.dist_range_m
    d_mec = config.dist_user_mec_m
    if d_mec is None:
        d_mec = lo + (hi - lo) * rng.random((K, M))
    elif d_mec.shape != (K, M):
        raise ValueError("dist_user_mec_m must have shape (K, M)")
    d_eve = config.dist_user_eve_m
    if d_eve is None:
        d_eve = lo + (hi - lo) * rng.random(K)
    elif d_eve.shape != (K,):
        raise ValueError("dist_user_eve_m must have shape (K,)")
    if (d_mec < config.d0_m).any() or (d_eve < config.d0_m).any():
        raise ValueError("all distances must be >= the reference distance d0_m")

    pl_mec = config.beta0 * (d_mec / config.d0_m) ** (-config.pathloss_exp)  # (K, M)
    pl_eve = config.beta0 * (d_eve / config.d0_m) ** (-config.pathloss_exp)  # (K,)

    if config.fading_mode == "rayleigh":
        fade_h = rng.standard_exponential((K, N, M))
        fade_g = rng.standard_exponential((K, N))
    else:
        fade_h = np.ones((K, N, M))
        fade_g = np.ones((K, N))

    sigma2 = system.sigma2_W
    h_tilde = pl_mec[:, None, :] * fade_h / sigma2
    g_bar = pl_eve[:, None] * fade_g / sigma2
    return ChannelState(h_tilde=h_tilde, g_bar=g_bar, eps=config.eps, sigma2_W=sigma2)
