"""Control generators, coarse sampling and measurement noise."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from dataclasses import replace as _replace

import numpy as np

from ..errors import BadBlockSize, LengthMismatch
from ..operator import SignalSeries, round_half_away
from .plant import MechanicalSystemParams

T0 = 2 * math.pi
# grid snapping treats fractions within this of one half as ties
SNAP_SLACK = 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    """Signal generation, sampling, noise and identification settings.

    ``delta_tau`` is the control hold (and coarse sampling) interval and
    ``delta_x`` the control quantum; ``n`` levels span ``[0, (n-1)*delta_x]``.
    """

    delta_tau: float = T0 / 8
    delta_x: float = 0.1
    t_max: float = 1e4
    G: float = 0.05
    sigma: float = 0.0
    alpha: float = 1.0
    seed: int = 0
    m: int = 8
    n: int = 11
    x_max: float = 1.0

    def __post_init__(self):
        for name in ("delta_tau", "delta_x", "t_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.G < 0 or self.sigma < 0:
            raise ValueError("G and sigma must be non-negative")
        if self.m < 1 or self.n < 2:
            raise ValueError("need m >= 1 and n >= 2")
        if (self.n - 1) * self.delta_x > self.x_max * (1 + 1e-9):
            raise ValueError("(n-1)*delta_x exceeds x_max")

    @classmethod
    def coarse_grid(cls, m: int, n: int, **kw) -> "ExperimentConfig":
        """Config whose discretisation follows ``m = T0/delta_tau`` and ``n = x_max/delta_x + 1``."""
        x_max = kw.pop("x_max", 1.0)
        return cls(delta_tau=T0 / m, delta_x=x_max / (n - 1), m=m, n=n, x_max=x_max, **kw)

    def replace(self, **kw) -> "ExperimentConfig":
        return _replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def block_size(delta_tau: float, dt: float) -> int:
    """Fine samples per coarse sample, ``N_s = delta_tau / dt``; must be integral."""
    r = delta_tau / dt
    ns = int(round(r))
    if ns < 1 or abs(r - ns) > 1e-9 * max(1.0, r):
        raise BadBlockSize(f"delta_tau/dt = {r} is not a positive integer")
    return ns


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gen_discrete_control(cfg: ExperimentConfig, seed, params=MechanicalSystemParams()) -> SignalSeries:
    """Piecewise-constant control with uniformly random levels.

    Holds last ``delta_tau``; there are ``Q = round(t_max / delta_tau)`` of
    them.  Fine sample ``i`` with ``(j-1)*N_s < i <= j*N_s`` belongs to hold
    ``j``; sample 0 (``t = 0``) repeats the first hold.
    """
    ns = block_size(cfg.delta_tau, params.dt)
    Q = int(round(cfg.t_max / cfg.delta_tau))
    k = _rng(seed).integers(1, cfg.n + 1, Q)
    vals = (k - 1) * cfg.delta_x
    x = np.empty(Q * ns + 1)
    x[1:] = np.repeat(vals, ns)
    x[0] = vals[0]
    return SignalSeries(x, params.dt)


def reflect_unit(q) -> np.ndarray:
    """Fold a free walk into ``[0, 1]`` with perfect reflection at both ends."""
    q = np.asarray(q, dtype=float)
    fl = np.floor(q)
    frac = q - fl
    return np.where(np.mod(fl, 2) == 0, frac, 1.0 - frac)


def gen_reflected_walk(cfg: ExperimentConfig, seed, params=MechanicalSystemParams()) -> SignalSeries:
    """Brownian control ``dx = G dW`` reflected into ``[0, 1]``, starting at 0."""
    N = int(round(cfg.t_max / params.dt))
    w = _rng(seed).standard_normal(N)
    x = np.zeros(N + 1)
    x[1:] = reflect_unit(np.cumsum(cfg.G * math.sqrt(params.dt) * w))
    return SignalSeries(x, params.dt)


def sample_holds(x_fine: SignalSeries, y_fine: SignalSeries, delta_tau: float):
    """Coarse record of a held control: hold values and outputs at ``t = j*delta_tau``."""
    ns = block_size(delta_tau, x_fine.dt)
    idx = np.arange(ns, len(x_fine), ns)
    return (SignalSeries(x_fine.values[idx], delta_tau, t0=delta_tau),
            SignalSeries(y_fine.values[idx], delta_tau, t0=delta_tau))


def downsample(x_fine: SignalSeries, y_fine: SignalSeries, delta_tau: float, delta_x: float):
    """Block-average fine signals into one sample per ``delta_tau``.

    The input mean is snapped to the ``delta_x`` grid (ties away from zero);
    the output mean is kept as is.  A trailing partial block is dropped.
    """
    if len(x_fine) != len(y_fine):
        raise LengthMismatch("fine input and output differ in length")
    ns = block_size(delta_tau, x_fine.dt)
    Q = len(x_fine) // ns
    if Q < 1:
        raise BadBlockSize(f"series shorter than one block of {ns} samples")
    xm = x_fine.values[:Q * ns].reshape(Q, ns).mean(axis=1)
    ym = y_fine.values[:Q * ns].reshape(Q, ns).mean(axis=1)
    xc = delta_x * round_half_away(xm / delta_x, SNAP_SLACK)
    return SignalSeries(xc, delta_tau), SignalSeries(ym, delta_tau)


def add_noise(series: SignalSeries, scale: float, sigma: float, seed) -> SignalSeries:
    """Add ``scale * sigma * w`` with independent standard normal ``w``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return SignalSeries(series.values.copy(), series.dt, series.valid, series.t0)
    w = _rng(seed).standard_normal(len(series))
    return SignalSeries(series.values + scale * sigma * w, series.dt, series.valid, series.t0)
