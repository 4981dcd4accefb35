"""Rank-based (Atlas-type) market simulator.

Each stock's log-capitalisation is a diffusion whose drift and volatility
depend only on its current capitalisation rank (rank 1 = largest). With
drifts increasing in rank the ranked log-caps are stable and the market
has a steady capital distribution curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class AtlasParams:
    """Simulation settings.

    ``drifts`` and ``vols`` are annualised and indexed by rank. When left
    as ``None`` they are affine in the normalised rank ``u = (r-1)/(n-1)``:
    drifts ``drift_spread * (u - 1/2)`` (summing to zero) and vols
    ``vol_low + (vol_high - vol_low) * u``. ``initial_log_caps`` defaults
    to the ranked configuration with each gap at its approximate stationary
    mean, so no burn-in is needed.
    """

    n_stocks: int = 101
    n_days: int = 5000
    dt: float = 1.0 / 252.0
    gamma: float = 0.0
    drifts: tuple | None = None
    vols: tuple | None = None
    initial_log_caps: tuple | None = None
    seed: int = 0
    drift_spread: float = 0.1
    vol_low: float = 0.15
    vol_high: float = 0.45

    def __post_init__(self):
        if self.n_stocks < 2:
            raise ValidationError("need at least two stocks")
        if self.n_days < 1:
            raise ValidationError("need at least one day")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        for name in ("drifts", "vols", "initial_log_caps"):
            v = getattr(self, name)
            if v is not None:
                arr = np.asarray(v, dtype=float)
                if arr.shape != (self.n_stocks,) or not np.all(np.isfinite(arr)):
                    raise ValidationError(f"{name} must be {self.n_stocks} finite values")
                object.__setattr__(self, name, tuple(arr.tolist()))
        if np.any(self.rank_vols() <= 0):
            raise ValidationError("volatilities must be positive")

    def _u(self):
        return np.arange(self.n_stocks) / (self.n_stocks - 1)

    def rank_drifts(self) -> np.ndarray:
        if self.drifts is not None:
            return np.array(self.drifts)
        return self.drift_spread * (self._u() - 0.5)

    def rank_vols(self) -> np.ndarray:
        if self.vols is not None:
            return np.array(self.vols)
        return self.vol_low + (self.vol_high - self.vol_low) * self._u()

    def start(self) -> np.ndarray:
        if self.initial_log_caps is not None:
            return np.array(self.initial_log_caps)
        g = self.rank_drifts()
        s2 = self.rank_vols() ** 2
        # gap k separates ranks k and k+1; its restoring rate is minus the
        # cumulative excess drift of the top k ranks
        rate = -np.cumsum(g - g.mean())[:-1]
        gaps = np.where(rate > 0, (s2[:-1] + s2[1:]) / (4.0 * np.maximum(rate, 1e-12)), 0.0)
        gaps = np.minimum(gaps, 1.0)
        return -np.concatenate(([0.0], np.cumsum(gaps)))


def atlas_simulate(params: AtlasParams | None = None):
    """Euler-Maruyama simulation of the rank-based model.

    Returns
    -------
    returns : (n_days, n_stocks) ndarray
        Arithmetic daily return of the stock holding rank ``r`` at the
        start of each day, column ``r - 1``.
    caps : (n_days, n_stocks) ndarray
        End-of-day capitalisations, one column per stock.
    """
    params = params or AtlasParams()
    n, m, dt = params.n_stocks, params.n_days, params.dt
    g = params.rank_drifts()
    sig = params.rank_vols()
    rng = np.random.default_rng(params.seed)
    x = params.start().copy()
    drift = (params.gamma + g) * dt
    scale = sig * np.sqrt(dt)
    returns = np.empty((m, n))
    caps = np.empty((m, n))
    for day in range(m):
        order = np.argsort(-x, kind="stable")  # order[r] = stock at rank r
        dx = drift + scale * rng.standard_normal(n)
        x[order] += dx
        returns[day] = np.expm1(dx)
        caps[day] = np.exp(x)
    return returns, caps
