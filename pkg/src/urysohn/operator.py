"""Discrete Urysohn operator: model container, quantiser and evaluation.

Levels and flat matrix indices are 1-based throughout the public API, so a
level ``k`` addresses column ``k - 1`` of ``model.matrix`` and row ``j``
(lag ``j - 1``) is ``matrix[j - 1]``.  Row 1 multiplies the newest input.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Sequence

import numpy as np

from .errors import LevelOutOfRange, MalformedModel, SeriesTooShort

FILL_VALUE = 0.0


def round_half_away(v, slack=0.0):
    """Round to nearest integer, ties away from zero.

    ``slack`` widens the tie band downwards, so fractions in
    ``[0.5 - slack, 0.5)`` also round up in magnitude.
    """
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    f = np.floor(a)
    r = f + ((a - f) >= 0.5 - slack)
    return np.copysign(r, v)


@dataclass(eq=False)
class UrysohnModel:
    """An ``m x n`` Urysohn matrix with its input range.

    Parameters
    ----------
    matrix : ndarray, shape (m, n)
        Row ``j`` holds the contribution of the input ``j - 1`` steps back.
    x_min, x_max : float
        Input range mapped onto levels ``1..n``.
    dims : tuple of int, optional
        Per-input level counts when several inputs were flattened into one.
    breakpoints : ndarray, optional
        Explicit increasing grid of ``n`` input values replacing the uniform
        grid; its ends must equal ``x_min`` and ``x_max``.
    """

    matrix: np.ndarray
    x_min: float = 0.0
    x_max: float = 1.0
    dims: tuple | None = None
    breakpoints: np.ndarray | None = None

    def __post_init__(self):
        self.matrix = np.array(self.matrix, dtype=float)
        self.x_min = float(self.x_min)
        self.x_max = float(self.x_max)
        problems = []
        if self.matrix.ndim != 2:
            problems.append(("matrix", f"expected 2-D array, got shape {self.matrix.shape}"))
        else:
            m, n = self.matrix.shape
            if m < 1:
                problems.append(("m", "must be a positive integer"))
            if n < 2:
                problems.append(("n", "must be at least 2"))
            if not np.all(np.isfinite(self.matrix)):
                problems.append(("matrix", "entries must be finite"))
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            problems.append(("x_min/x_max", "must be finite"))
        elif not self.x_min < self.x_max:
            problems.append(("x_min/x_max", f"need x_min < x_max, got {self.x_min} >= {self.x_max}"))
        if self.dims is not None:
            self.dims = tuple(int(d) for d in self.dims)
            if any(d < 1 for d in self.dims):
                problems.append(("dims", "entries must be positive"))
            elif self.matrix.ndim == 2 and prod(self.dims) != self.matrix.shape[1]:
                problems.append(("dims", f"product {prod(self.dims)} != n={self.matrix.shape[1]}"))
        if self.breakpoints is not None:
            bp = np.array(self.breakpoints, dtype=float)
            self.breakpoints = bp
            if self.matrix.ndim == 2 and bp.shape != (self.matrix.shape[1],):
                problems.append(("breakpoints", "must have exactly n entries"))
            elif not np.all(np.diff(bp) > 0):
                problems.append(("breakpoints", "must be strictly increasing"))
            elif bp[0] != self.x_min or bp[-1] != self.x_max:
                problems.append(("breakpoints", "ends must equal x_min and x_max"))
        if problems:
            raise MalformedModel(problems)

    @classmethod
    def zeros(cls, m, n, x_min=0.0, x_max=1.0, **kw):
        return cls(np.zeros((m, n)), x_min, x_max, **kw)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def copy(self) -> "UrysohnModel":
        return UrysohnModel(
            self.matrix.copy(), self.x_min, self.x_max, self.dims,
            None if self.breakpoints is None else self.breakpoints.copy(),
        )

    def level_values(self) -> np.ndarray:
        """Input value represented by each level."""
        if self.breakpoints is not None:
            return self.breakpoints.copy()
        k = np.arange(self.n)
        return self.x_min + k * (self.x_max - self.x_min) / (self.n - 1)

    def __eq__(self, other):
        if not isinstance(other, UrysohnModel):
            return NotImplemented
        same_bp = (self.breakpoints is None and other.breakpoints is None) or (
            self.breakpoints is not None and other.breakpoints is not None
            and self.breakpoints.tobytes() == other.breakpoints.tobytes()
        )
        return (
            self.matrix.shape == other.matrix.shape
            and self.matrix.tobytes() == other.matrix.tobytes()
            and np.float64(self.x_min).tobytes() == np.float64(other.x_min).tobytes()
            and np.float64(self.x_max).tobytes() == np.float64(other.x_max).tobytes()
            and self.dims == other.dims
            and same_bp
        )


@dataclass
class SignalSeries:
    """Uniformly sampled scalar signal.

    ``valid`` is an optional boolean mask; ``None`` means every sample is valid.
    """

    values: np.ndarray
    dt: float = 1.0
    valid: np.ndarray | None = None
    t0: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("values must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.valid is not None:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.values.shape:
                raise ValueError("valid mask must match values")

    def __len__(self):
        return self.values.size

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)


@dataclass(frozen=True)
class InterpolationStencil:
    k_lo: int
    k_hi: int
    psi: float
    b: float


def _values(x):
    if isinstance(x, SignalSeries):
        return x.values
    return np.asarray(x, dtype=float)


def level_offset(x, model: UrysohnModel) -> np.ndarray:
    """Fractional distance ``b - 1`` from level 1, in ``[0, n - 1]``.

    Inputs outside ``[x_min, x_max]`` are clamped first.
    """
    x = np.clip(np.asarray(x, dtype=float), model.x_min, model.x_max)
    if model.breakpoints is None:
        return (model.n - 1) * (x - model.x_min) / (model.x_max - model.x_min)
    bp = model.breakpoints
    seg = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, model.n - 2)
    return seg + (x - bp[seg]) / (bp[seg + 1] - bp[seg])


def scaled_position(x, model: UrysohnModel) -> np.ndarray:
    """Fractional level position ``b`` in ``[1, n]``."""
    return 1.0 + level_offset(x, model)


def quantize_levels(x, model: UrysohnModel) -> np.ndarray:
    """Vectorised :func:`quantize`; returns an int array of levels in ``1..n``."""
    k = 1 + round_half_away(level_offset(_values(x), model))
    return np.clip(k, 1, model.n).astype(np.int64)


def quantize(x: float, model: UrysohnModel) -> int:
    """Level ``1 + round((n-1)(x - x_min)/(x_max - x_min))``, clamped to ``[1, n]``."""
    return int(quantize_levels(np.array([x]), model)[0])


def stencils(x, model: UrysohnModel):
    """Vectorised :func:`stencil`; returns ``(k_lo, k_hi, psi)`` arrays."""
    b = scaled_position(_values(x), model)
    k_lo = np.floor(b)
    k_hi = np.ceil(b)
    return k_lo.astype(np.int64), k_hi.astype(np.int64), b - k_lo


def stencil(x: float, model: UrysohnModel) -> InterpolationStencil:
    b = float(scaled_position(np.array([x]), model)[0])
    k_lo = int(np.floor(b))
    return InterpolationStencil(k_lo, int(np.ceil(b)), b - k_lo, b)


def _check_levels(levels, n):
    levels = np.asarray(levels, dtype=np.int64)
    if levels.size and (levels.min() < 1 or levels.max() > n):
        raise LevelOutOfRange(f"levels must lie in 1..{n}")
    return levels


def eval_levels(matrix, levels) -> np.ndarray:
    """Evaluate the operator on integer levels.

    Returns an array of the same length as ``levels``; the first ``m - 1``
    entries (undefined warm-up) hold :data:`FILL_VALUE`.
    """
    matrix = np.asarray(matrix, dtype=float)
    m, n = matrix.shape
    k = _check_levels(levels, n) - 1
    N = k.size
    if N < m:
        raise SeriesTooShort(f"need at least m={m} samples, got {N}")
    y = np.full(N, FILL_VALUE)
    acc = np.zeros(N - m + 1)
    for j in range(m):
        acc += matrix[j, k[m - 1 - j:N - j]]
    y[m - 1:] = acc
    return y


def eval_stencils(matrix, k_lo, k_hi, psi) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    m, n = matrix.shape
    k_lo = _check_levels(k_lo, n) - 1
    k_hi = _check_levels(k_hi, n) - 1
    psi = np.asarray(psi, dtype=float)
    N = k_lo.size
    if N < m:
        raise SeriesTooShort(f"need at least m={m} samples, got {N}")
    y = np.full(N, FILL_VALUE)
    acc = np.zeros(N - m + 1)
    for j in range(m):
        s = slice(m - 1 - j, N - j)
        acc += (1.0 - psi[s]) * matrix[j, k_lo[s]] + psi[s] * matrix[j, k_hi[s]]
    y[m - 1:] = acc
    return y


def _warmup_mask(N, m):
    valid = np.ones(N, dtype=bool)
    valid[:m - 1] = False
    return valid


def eval_quantized(model: UrysohnModel, input) -> SignalSeries:
    """Output of the operator on a quantised input series.

    Inputs are snapped to levels with :func:`quantize_levels`.  The first
    ``m - 1`` output samples are undefined; they carry :data:`FILL_VALUE`
    and are marked invalid.
    """
    dt = input.dt if isinstance(input, SignalSeries) else 1.0
    y = eval_levels(model.matrix, quantize_levels(input, model))
    return SignalSeries(y, dt, _warmup_mask(y.size, model.m))


def eval_interpolated(model: UrysohnModel, input) -> SignalSeries:
    """Output of the piecewise-linear (non-quantised) generalisation."""
    dt = input.dt if isinstance(input, SignalSeries) else 1.0
    y = eval_stencils(model.matrix, *stencils(input, model))
    return SignalSeries(y, dt, _warmup_mask(y.size, model.m))


def flatten_multi_input(levels: Sequence[int], dims: Sequence[int]) -> int:
    """Map per-input levels ``(k1, .., kp)`` to one level ``k*`` in ``1..prod(dims)``.

    Lexicographic with input 1 varying fastest:
    ``k* = 1 + sum_g (k_g - 1) * prod_{h<g} n_h``.
    """
    if len(levels) != len(dims):
        raise LevelOutOfRange("levels and dims differ in length")
    k, stride = 1, 1
    for g, (kg, ng) in enumerate(zip(levels, dims)):
        if not 1 <= kg <= ng:
            raise LevelOutOfRange(f"input {g + 1}: level {kg} outside 1..{ng}")
        k += (kg - 1) * stride
        stride *= ng
    return k


def flatten_levels(level_arrays, dims) -> np.ndarray:
    """Vectorised :func:`flatten_multi_input` over aligned level arrays."""
    if len(level_arrays) != len(dims):
        raise LevelOutOfRange("level_arrays and dims differ in length")
    out, stride = None, 1
    for g, (kg, ng) in enumerate(zip(level_arrays, dims)):
        kg = np.asarray(kg, dtype=np.int64)
        if kg.size and (kg.min() < 1 or kg.max() > ng):
            raise LevelOutOfRange(f"input {g + 1}: levels outside 1..{ng}")
        term = (kg - 1) * stride
        out = term if out is None else out + term
        stride *= ng
    return out + 1


def unflatten_level(k: int, dims: Sequence[int]) -> tuple:
    """Inverse of :func:`flatten_multi_input`."""
    if not 1 <= k <= prod(dims):
        raise LevelOutOfRange(f"flat level {k} outside 1..{prod(dims)}")
    r, out = k - 1, []
    for ng in dims:
        out.append(r % ng + 1)
        r //= ng
    return tuple(out)
