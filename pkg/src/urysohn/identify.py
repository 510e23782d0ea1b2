"""Streaming identification of the Urysohn matrix.

Each observed output defines one hyperplane in the space of matrix entries
(the entries addressed by the current input window).  Every step projects
the current estimate towards that hyperplane, scaled by the stabilisation
parameter ``alpha``: a row-action Kaczmarz sweep run in time order.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import LengthMismatch, LevelOutOfRange, SeriesTooShort
from .operator import (
    FILL_VALUE, SignalSeries, UrysohnModel, quantize_levels, stencils,
)


@dataclass
class IdentConfig:
    """Identification settings.

    ``stop_tol = 0`` disables early stopping; otherwise a run stops once
    ``|D| <= stop_tol`` held for ``stop_window`` consecutive steps.
    ``init`` is an optional starting matrix (zeros when ``None``).
    """

    alpha: float = 1.0
    init: np.ndarray | None = None
    interpolated: bool = False
    stop_tol: float = 0.0
    stop_window: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be non-negative")
        if int(self.stop_window) < 1:
            raise ValueError("stop_window must be >= 1")
        self.stop_window = int(self.stop_window)


@dataclass
class IdentState:
    model: UrysohnModel
    counters: np.ndarray
    alpha: float = 1.0
    stop_tol: float = 0.0
    stop_window: int = 1
    residuals: list = field(default_factory=list)
    samples_seen: int = 0
    stopped: bool = False
    pass_norms: list = field(default_factory=list)
    _quiet: int = 0

    def __post_init__(self):
        self.last_residuals = deque(maxlen=self.stop_window)

    @classmethod
    def fresh(cls, m, n, x_min=0.0, x_max=1.0, config: IdentConfig | None = None, **model_kw):
        config = config or IdentConfig()
        if config.init is not None:
            matrix = np.array(config.init, dtype=float)
            if matrix.shape != (m, n):
                raise LengthMismatch(f"init matrix shape {matrix.shape} != ({m}, {n})")
        else:
            matrix = np.zeros((m, n))
        model = UrysohnModel(matrix, x_min, x_max, **model_kw)
        return cls(
            model, np.zeros((m, n), dtype=np.int64), config.alpha,
            config.stop_tol, config.stop_window,
        )

    def _record(self, D):
        self.residuals.append(D)
        self.last_residuals.append(D)
        self.samples_seen += 1
        if self.stop_tol > 0:
            self._quiet = self._quiet + 1 if abs(D) <= self.stop_tol else 0
            if self._quiet >= self.stop_window:
                self.stopped = True


def _window_flat_quantized(state, window):
    m, n = state.model.matrix.shape
    k = np.asarray(window, dtype=np.int64)
    if k.shape != (m,):
        raise LengthMismatch(f"window must hold m={m} levels")
    if k.min() < 1 or k.max() > n:
        raise LevelOutOfRange(f"levels must lie in 1..{n}")
    # row r pairs with the input r steps back; the window is oldest-first
    return np.arange(m) * n + (k[::-1] - 1)


def ident_step_quantized(state: IdentState, window, y_obs: float) -> float:
    """One projection step on a window of ``m`` levels (oldest first).

    Adds ``alpha * D / m`` to each addressed entry and returns
    ``D = y_obs - y_hat``.
    """
    idx = _window_flat_quantized(state, window)
    Z = state.model.matrix.reshape(-1)
    C = state.counters.reshape(-1)
    D = float(y_obs - Z[idx].sum())
    Z[idx] += state.alpha * D / state.model.m
    C[idx] += 1
    state._record(D)
    return D


def _window_weights(state, window):
    m, n = state.model.matrix.shape
    x = np.asarray(window, dtype=float)
    if x.shape != (m,):
        raise LengthMismatch(f"window must hold m={m} inputs")
    if not np.all(np.isfinite(x)):
        raise ValueError("window inputs must be finite")
    k_lo, k_hi, psi = stencils(x[::-1], state.model)
    base = np.arange(m) * n
    return base + k_lo - 1, base + k_hi - 1, 1.0 - psi, psi


def ident_step_interpolated(state: IdentState, window, y_obs: float) -> float:
    """Projection step for real-valued inputs between grid levels.

    Each addressed pair of neighbouring entries receives the residual in
    proportion to its interpolation weight, normalised by the squared row norm.
    """
    lo, hi, w_lo, w_hi = _window_weights(state, window)
    Z = state.model.matrix.reshape(-1)
    C = state.counters.reshape(-1)
    D = float(y_obs - (w_lo * Z[lo] + w_hi * Z[hi]).sum())
    norm = (w_lo * w_lo + w_hi * w_hi).sum()
    Z[lo] += state.alpha * D * w_lo / norm
    Z[hi] += state.alpha * D * w_hi / norm
    C[lo] += 1
    C[hi[hi != lo]] += 1
    state._record(D)
    return D


def _flat_rows(k0, m, n):
    """Flat 0-based entry indices addressed by every full window of ``k0``."""
    N = k0.size
    rows = np.empty((N - m + 1, m), dtype=np.int64)
    for r in range(m):
        rows[:, r] = r * n + k0[m - 1 - r:N - r]
    return rows


def _check_lengths(x, y, m):
    if x.size != y.size:
        raise LengthMismatch(f"input has {x.size} samples, output {y.size}")
    if x.size < m:
        raise SeriesTooShort(f"need at least m={m} samples, got {x.size}")


def _run_quantized(state, levels, y, snapshot_every, on_snapshot):
    m, n = state.model.matrix.shape
    k = np.asarray(levels, dtype=np.int64)
    if k.size and (k.min() < 1 or k.max() > n):
        raise LevelOutOfRange(f"levels must lie in 1..{n}")
    rows = _flat_rows(k - 1, m, n)
    Z = state.model.matrix.reshape(-1)
    alpha = state.alpha
    yy = y[m - 1:]
    done = 0
    for t in range(rows.shape[0]):
        idx = rows[t]
        D = float(yy[t] - Z[idx].sum())
        Z[idx] += alpha * D / m
        state._record(D)
        done += 1
        if snapshot_every and done % snapshot_every == 0:
            on_snapshot(state.samples_seen, state.model.copy())
        if state.stopped:
            break
    state.counters += np.bincount(rows[:done].ravel(), minlength=m * n).reshape(m, n)


def _run_interpolated(state, x, y, snapshot_every, on_snapshot):
    m, n = state.model.matrix.shape
    k_lo, k_hi, psi = stencils(x, state.model)
    lo = _flat_rows(k_lo - 1, m, n)
    hi = _flat_rows(k_hi - 1, m, n)
    p = np.empty(lo.shape)
    N = x.size
    for r in range(m):
        p[:, r] = psi[m - 1 - r:N - r]
    w_lo = 1.0 - p
    w_hi = p
    norms = (w_lo * w_lo + w_hi * w_hi).sum(axis=1)
    Z = state.model.matrix.reshape(-1)
    C = state.counters.reshape(-1)
    alpha = state.alpha
    yy = y[m - 1:]
    for t in range(lo.shape[0]):
        a, b, wa, wb = lo[t], hi[t], w_lo[t], w_hi[t]
        D = float(yy[t] - (wa * Z[a] + wb * Z[b]).sum())
        Z[a] += alpha * D * wa / norms[t]
        Z[b] += alpha * D * wb / norms[t]
        C[a] += 1
        C[b[b != a]] += 1
        state._record(D)
        if snapshot_every and (t + 1) % snapshot_every == 0:
            on_snapshot(state.samples_seen, state.model.copy())
        if state.stopped:
            break


def run_identification(
    input, output, config: IdentConfig | None = None, m: int = 8, n: int = 11,
    x_min: float = 0.0, x_max: float = 1.0, *, state: IdentState | None = None,
    snapshot_every: int = 0, on_snapshot: Callable | None = None,
) -> IdentState:
    """Single forward pass over an input/output record.

    Steps run for ``i = m..N`` in index order.  Passing ``state`` continues
    an existing session instead of starting from ``config.init``.  With
    ``snapshot_every = k``, ``on_snapshot(samples_seen, model_copy)`` is
    called after every ``k`` steps.
    """
    config = config or IdentConfig()
    x = input.values if isinstance(input, SignalSeries) else np.asarray(input, dtype=float)
    y = output.values if isinstance(output, SignalSeries) else np.asarray(output, dtype=float)
    if state is None:
        state = IdentState.fresh(m, n, x_min, x_max, config)
    m = state.model.m
    _check_lengths(x, y, m)
    if snapshot_every and on_snapshot is None:
        raise ValueError("snapshot_every needs an on_snapshot callback")
    if config.interpolated:
        _run_interpolated(state, x, y, snapshot_every, on_snapshot)
    else:
        _run_quantized(state, quantize_levels(x, state.model), y, snapshot_every, on_snapshot)
    return state


def identify_levels(
    levels, outputs, m: int, n: int, config: IdentConfig | None = None, *,
    state: IdentState | None = None, passes: int = 1, **model_kw,
) -> IdentState:
    """Identify directly from integer levels (e.g. flattened multi-input levels)."""
    config = config or IdentConfig()
    k = np.asarray(levels, dtype=np.int64)
    y = np.asarray(outputs, dtype=float)
    _check_lengths(k, y, m)
    if state is None:
        state = IdentState.fresh(m, n, config=config, **model_kw)
    for _ in range(passes):
        start = len(state.residuals)
        _run_quantized(state, k, y, 0, None)
        state.pass_norms.append(float(np.linalg.norm(state.residuals[start:])))
        if state.stopped:
            break
    return state


def run_epochs(
    input, output, config: IdentConfig | None = None, m: int = 8, n: int = 11,
    x_min: float = 0.0, x_max: float = 1.0, passes: int = 1, *,
    state: IdentState | None = None,
) -> IdentState:
    """Repeat :func:`run_identification` over the same record without resetting.

    ``state.pass_norms`` collects the L2 norm of the residuals of each pass.
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    config = config or IdentConfig()
    for _ in range(passes):
        start = len(state.residuals) if state is not None else 0
        state = run_identification(input, output, config, m, n, x_min, x_max, state=state)
        state.pass_norms.append(float(np.linalg.norm(state.residuals[start:])))
        if state.stopped:
            break
    return state


@dataclass
class CoverageReport:
    counters: np.ndarray
    column_counts: np.ndarray
    untouched_columns: list
    identified_range: tuple | None
    identified_x_range: tuple | None

    def to_dict(self):
        return {
            "counters": self.counters.tolist(),
            "column_counts": self.column_counts.tolist(),
            "untouched_columns": self.untouched_columns,
            "identified_range": self.identified_range,
            "identified_x_range": self.identified_x_range,
        }


def coverage_report(state_or_counters, model: UrysohnModel | None = None) -> CoverageReport:
    """Summarise which columns (levels) received updates.

    Column numbers and the identified range are 1-based levels.
    """
    if isinstance(state_or_counters, IdentState):
        counters, model = state_or_counters.counters, state_or_counters.model
    else:
        counters = np.asarray(state_or_counters)
    col = counters.sum(axis=0)
    touched = np.flatnonzero(col > 0)
    untouched = [int(c) + 1 for c in np.flatnonzero(col == 0)]
    if touched.size:
        rng = (int(touched[0]) + 1, int(touched[-1]) + 1)
        xr = None
        if model is not None:
            vals = model.level_values()
            xr = (float(vals[rng[0] - 1]), float(vals[rng[1] - 1]))
    else:
        rng = xr = None
    return CoverageReport(counters.copy(), col, untouched, rng, xr)


def predict_with_validity(
    model: UrysohnModel, counters, input, *, interpolated: bool = False,
    fill_value: float = FILL_VALUE,
) -> SignalSeries:
    """Model output with a per-sample validity mask.

    A sample is valid when every matrix entry its window addresses has been
    updated at least once; other samples (and the warm-up) hold ``fill_value``.
    """
    counters = np.asarray(counters)
    if counters.shape != model.matrix.shape:
        raise LengthMismatch("counters shape must match the model matrix")
    dt = input.dt if isinstance(input, SignalSeries) else 1.0
    x = input.values if isinstance(input, SignalSeries) else np.asarray(input, dtype=float)
    m, n = model.matrix.shape
    N = x.size
    if N < m:
        raise SeriesTooShort(f"need at least m={m} samples, got {N}")
    touched = counters > 0
    ok = np.ones(N - m + 1, dtype=bool)
    acc = np.zeros(N - m + 1)
    U = model.matrix
    if interpolated:
        k_lo, k_hi, psi = stencils(x, model)
        for j in range(m):
            s = slice(m - 1 - j, N - j)
            a, b, p = k_lo[s] - 1, k_hi[s] - 1, psi[s]
            acc += (1.0 - p) * U[j, a] + p * U[j, b]
            ok &= touched[j, a] & ((p == 0) | touched[j, b])
    else:
        k = quantize_levels(x, model) - 1
        for j in range(m):
            s = k[m - 1 - j:N - j]
            acc += U[j, s]
            ok &= touched[j, s]
    y = np.full(N, float(fill_value))
    valid = np.zeros(N, dtype=bool)
    valid[m - 1:] = ok
    y[m - 1:][ok] = acc[ok]
    return SignalSeries(y, dt, valid)


def extrapolate_edges(model: UrysohnModel, counters) -> UrysohnModel:
    """Fill never-updated entries row by row from the updated ones.

    Gaps between updated entries are interpolated linearly; entries beyond
    the outermost updated ones continue the line through the two nearest
    updated entries (constant when a row has only one).
    """
    out = model.copy()
    U = out.matrix
    cols = np.arange(model.n)
    for r in range(model.m):
        t = np.flatnonzero(np.asarray(counters)[r] > 0)
        if t.size == 0 or t.size == model.n:
            continue
        row = U[r].copy()
        U[r] = np.interp(cols, t, row[t])
        if t.size > 1:
            left, right = cols < t[0], cols > t[-1]
            s_lo = (row[t[1]] - row[t[0]]) / (t[1] - t[0])
            s_hi = (row[t[-1]] - row[t[-2]]) / (t[-1] - t[-2])
            U[r, left] = row[t[0]] + (cols[left] - t[0]) * s_lo
            U[r, right] = row[t[-1]] + (cols[right] - t[-1]) * s_hi
    return out
