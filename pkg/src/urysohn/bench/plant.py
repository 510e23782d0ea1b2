"""Benchmark plant: a mass on a horizontal spring pulled by an inclined spring.

The control ``x`` raises the anchor of the inclined spring; the output ``y``
is the horizontal displacement of the mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NonFinite, SingularGeometry
from ..operator import SignalSeries


@dataclass(frozen=True)
class MechanicalSystemParams:
    omega: float = 1.0
    zeta: float = 1.0
    L: float = 1.0
    H: float = 0.5
    dt: float = 2 * math.pi / 128
    y0: float = 0.0
    v0: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not self.zeta >= 0:
            raise ValueError("zeta must be non-negative")
        if not self.L > 0 or not self.H >= 0:
            raise ValueError("need L > 0 and H >= 0")
        if not 0 < self.dt < 2 * math.pi / self.omega:
            raise ValueError("dt must lie in (0, 2*pi/omega)")

    @property
    def y_smax(self) -> float:
        """Largest static displacement magnitude, ``(sqrt(L^2 + H^2) - L) / 2``."""
        return 0.5 * (math.hypot(self.L, self.H) - self.L)


def plant_force(y: float, x: float, params: MechanicalSystemParams = MechanicalSystemParams()) -> float:
    """Mass-normalised horizontal force at displacement ``y`` and control ``x``."""
    w2, L, H = params.omega ** 2, params.L, params.H
    dx, dh = L - y, H - x
    d = math.sqrt(dx * dx + dh * dh)
    if d == 0.0:
        raise SingularGeometry(f"spring length vanishes at y={y}, x={x}")
    return -w2 * y - w2 * (math.hypot(L, H) - d) * dx / d


def simulate_plant(control, params: MechanicalSystemParams = MechanicalSystemParams()) -> SignalSeries:
    """Verlet integration of the plant for a control sampled at ``params.dt``.

    ``y[0] = y0``; ``y[1]`` uses the Taylor start-up step and ``y[i+1]``
    depends on ``x[i]``.  The damping term uses central differences.
    """
    if isinstance(control, SignalSeries):
        if abs(control.dt - params.dt) > 1e-12 * params.dt:
            raise ValueError(f"control dt {control.dt} != plant dt {params.dt}")
        xs = control.values.tolist()
    else:
        xs = np.asarray(control, dtype=float).tolist()
    N = len(xs)
    w2, L, H, dt = params.omega ** 2, params.L, params.H, params.dt
    c0 = math.hypot(L, H)
    zw = params.zeta * params.omega * dt
    a, b, dt2 = 1.0 + zw, 1.0 - zw, dt * dt
    y = [0.0] * N
    y[0] = params.y0
    if N > 1:
        y[1] = params.y0 + dt * params.v0 * b + plant_force(params.y0, xs[0], params) * dt2 / 2
    sqrt = math.sqrt
    i = 1
    try:
        for i in range(1, N - 1):
            yi = y[i]
            dx, dh = L - yi, H - xs[i]
            d = sqrt(dx * dx + dh * dh)
            f = -w2 * yi - w2 * (c0 - d) * dx / d
            y[i + 1] = (2.0 * yi - y[i - 1] * b + f * dt2) / a
    except ZeroDivisionError:
        raise SingularGeometry(f"spring length vanishes at step {i}") from None
    except (OverflowError, ValueError):
        raise NonFinite(f"state diverged at step {i}", step=i) from None
    out = np.array(y)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise NonFinite(f"state diverged at step {bad[0]}", step=int(bad[0]))
    return SignalSeries(out, params.dt)


def static_response(x: float, params: MechanicalSystemParams = MechanicalSystemParams(),
                    tol: float = 1e-10) -> float:
    """Equilibrium displacement for a constant control, by bisection on ``(-L/2, L/2)``."""
    lo, hi = -params.L / 2, params.L / 2
    f_lo = plant_force(lo, x, params)
    if f_lo * plant_force(hi, x, params) > 0:
        raise ValueError("no sign change on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = plant_force(mid, x, params)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
