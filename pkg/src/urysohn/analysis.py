"""Structural analysis of Urysohn identification problems.

Assembles the linear system behind identification, checks its rank by brute
force, solves it with pinned entries or at minimum norm, tests whether a
black box is describable by a discrete Urysohn operator and classifies an
identified matrix as linear, Hammerstein or general.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BadPinPattern, Inconsistent, InsufficientQueries, LevelOutOfRange, SeriesTooShort, TooLarge,
)
from .operator import UrysohnModel, eval_levels, quantize_levels

MAX_WINDOWS = 10**6
RANK_TOL = 1e-9
SOLVE_TOL = 1e-9


@dataclass
class AssembledSystem:
    """Sparse 0/1 system ``M Z = rhs`` over the flattened matrix ``Z``.

    ``rows[i]`` lists the ``m`` 1-based column indices set to one in row
    ``i``; index ``n*(j-1) + k`` stands for matrix entry ``[j, k]``.
    """

    rows: np.ndarray
    rhs: np.ndarray
    m: int
    n: int

    @property
    def width(self) -> int:
        return self.m * self.n

    def __len__(self):
        return self.rows.shape[0]

    def dense(self) -> np.ndarray:
        M = np.zeros((len(self), self.width))
        np.put_along_axis(M, self.rows - 1, 1.0, axis=1)
        return M


def _flat_rows(levels, m, n):
    k = np.asarray(levels, dtype=np.int64)
    N = k.size
    rows = np.empty((N - m + 1, m), dtype=np.int64)
    for j in range(m):
        rows[:, j] = n * j + k[m - 1 - j:N - j]
    return rows


def assemble_system(levels, outputs, m: int, n: int) -> AssembledSystem:
    """One equation per output ``y_i`` with ``i >= m`` (1-based)."""
    k = np.asarray(levels, dtype=np.int64)
    if k.size < m:
        raise SeriesTooShort(f"need at least m={m} levels, got {k.size}")
    if k.min() < 1 or k.max() > n:
        raise LevelOutOfRange(f"levels must lie in 1..{n}")
    if outputs is None:
        rhs = np.zeros(k.size - m + 1)
    else:
        y = np.asarray(outputs, dtype=float)
        if y.size != k.size:
            raise SeriesTooShort("outputs must align with levels")
        rhs = y[m - 1:].copy()
    return AssembledSystem(_flat_rows(k, m, n), rhs, m, n)


def enumerate_full_system(m: int, n: int, model: UrysohnModel | None = None) -> AssembledSystem:
    """System over every possible window, in lexicographic window order.

    Windows are written oldest input first.  With ``model`` the right-hand
    side holds the model's response to each window, otherwise zeros.
    """
    if n ** m > MAX_WINDOWS:
        raise TooLarge(f"n**m = {n ** m} windows exceeds {MAX_WINDOWS}")
    K = np.array(list(itertools.product(range(1, n + 1), repeat=m)), dtype=np.int64)
    rows = np.empty_like(K)
    for j in range(m):
        rows[:, j] = n * j + K[:, m - 1 - j]
    rhs = np.zeros(K.shape[0])
    if model is not None:
        U = model.matrix.reshape(-1)
        rhs = U[rows - 1].sum(axis=1)
    return AssembledSystem(rows, rhs, m, n)


def _dense_of(system):
    if isinstance(system, AssembledSystem):
        if len(system) * system.width > 5 * 10**7:
            raise TooLarge("dense expansion too large")
        return system.dense()
    return np.array(system, dtype=float)


def brute_rank(system, tol: float = RANK_TOL) -> int:
    """Numerical rank by Gaussian elimination with partial pivoting.

    Pivots smaller than ``tol`` times the largest entry count as zero.
    """
    A = _dense_of(system).copy()
    if A.size == 0:
        return 0
    R, W = A.shape
    thresh = tol * np.abs(A).max()
    if thresh == 0:
        return 0
    rank = 0
    for c in range(W):
        if rank == R:
            break
        col = np.abs(A[rank:, c])
        p = rank + int(np.argmax(col))
        if col[p - rank] <= thresh:
            continue
        if p != rank:
            A[[rank, p]] = A[[p, rank]]
        piv = A[rank]
        below = A[rank + 1:]
        f = below[:, c] / piv[c]
        nz = np.flatnonzero(f)
        if nz.size:
            below[nz] -= np.outer(f[nz], piv)
        rank += 1
    return rank


def block_column_rank(system: AssembledSystem, blocks: Sequence[int]) -> int:
    """Rank of the columns belonging to the given 1-based row blocks of ``U``."""
    cols = np.concatenate([np.arange((b - 1) * system.n, b * system.n) for b in blocks])
    return brute_rank(system.dense()[:, cols])


def _residual_check(M, Z, rhs, tol):
    res = np.abs(M @ Z - rhs).max() if rhs.size else 0.0
    scale = max(1.0, np.abs(rhs).max() if rhs.size else 0.0)
    if res > tol * scale:
        raise Inconsistent(f"residual {res:.3e} exceeds tolerance; data not from a Urysohn system?")


def min_norm_solve(system: AssembledSystem, tol: float = SOLVE_TOL) -> np.ndarray:
    """Minimum-L2-norm exact solution ``Z`` (flat, row-major ``U``)."""
    M = system.dense()
    Z = np.linalg.lstsq(M, system.rhs, rcond=None)[0]
    _residual_check(M, Z, system.rhs, tol)
    return Z


def pin_and_solve(system: AssembledSystem, pins, tol: float = SOLVE_TOL) -> np.ndarray:
    """Exact solution with some entries prescribed.

    ``pins`` is a list of ``(flat_index, value)`` with 1-based indices; at
    most ``m - 1`` pins and at most one per matrix row.  With full input
    coverage and ``m - 1`` pins the result is unique; otherwise the free part
    is the minimum-norm one.
    """
    m, n = system.m, system.n
    pins = [(int(q), float(v)) for q, v in pins]
    if len(pins) > m - 1:
        raise BadPinPattern(f"at most m-1={m - 1} pins allowed, got {len(pins)}")
    seen = set()
    for q, _ in pins:
        if not 1 <= q <= system.width:
            raise BadPinPattern(f"pin index {q} outside 1..{system.width}")
        block = (q - 1) // n
        if block in seen:
            raise BadPinPattern(f"two pins in matrix row {block + 1}")
        seen.add(block)
    M = system.dense()
    Z = np.zeros(system.width)
    fixed = np.array([q - 1 for q, _ in pins], dtype=np.int64)
    Z[fixed] = [v for _, v in pins]
    free = np.setdiff1d(np.arange(system.width), fixed)
    rhs = system.rhs - M[:, fixed] @ Z[fixed]
    Z[free] = np.linalg.lstsq(M[:, free], rhs, rcond=None)[0]
    _residual_check(M, Z, system.rhs, tol)
    return Z


@dataclass
class DescribabilityReport:
    memory_ok: bool
    memory_violation: float
    max_additivity_violation: float
    tolerance: float
    verdict: bool
    coverage: float
    queries: int

    def to_dict(self):
        return asdict(self)


def _grid(n, x_min, x_max):
    return x_min + np.arange(n) * (x_max - x_min) / (n - 1)


def check_describability(
    black_box: Callable[[np.ndarray], float], m: int, n: int, tolerance: float = 1e-9,
    x_min: float = 0.0, x_max: float = 1.0, *, memory_trials: int = 32,
    prefix_len: int | None = None, max_pairs: int | None = None, seed: int = 0,
) -> DescribabilityReport:
    """Test finite memory and impulse additivity of a quantised-input system.

    ``black_box(history)`` receives the full input history (oldest first,
    values on the ``n``-level grid) and returns the output at its last
    sample.  The memory check feeds identical final windows behind
    different random prefixes.  The additivity check compares responses to
    the all-minimum window, single impulses at positions ``p`` and ``q`` and
    their combination.  ``max_pairs`` caps the number of impulse pairs
    (sampled at random); ``coverage`` reports the tested fraction.
    """
    rng = np.random.default_rng(seed)
    grid = _grid(n, x_min, x_max)
    P = prefix_len if prefix_len is not None else max(m, 4)
    queries = 0

    def ask(window, prefix):
        nonlocal queries
        queries += 1
        return float(black_box(np.concatenate([prefix, window])))

    mem = 0.0
    for _ in range(memory_trials):
        w = grid[rng.integers(0, n, m)]
        a = ask(w, grid[rng.integers(0, n, P)])
        b = ask(w, grid[rng.integers(0, n, P)])
        mem = max(mem, abs(a - b))

    base_prefix = np.full(P, x_min)
    star = np.full(m, x_min)
    y_star = ask(star, base_prefix)
    single = {}
    for p in range(m):
        for k in range(1, n):
            w = star.copy()
            w[p] = grid[k]
            single[p, k] = ask(w, base_prefix)
    combos = [
        (p, q, kp, kq)
        for p, q in itertools.combinations(range(m), 2)
        for kp in range(1, n) for kq in range(1, n)
    ]
    total = len(combos)
    if max_pairs is not None and max_pairs < total:
        pick = rng.choice(total, size=max_pairs, replace=False)
        combos = [combos[i] for i in sorted(pick)]
    add = 0.0
    for p, q, kp, kq in combos:
        w = star.copy()
        w[p], w[q] = grid[kp], grid[kq]
        v = abs(y_star + ask(w, base_prefix) - single[p, kp] - single[q, kq])
        add = max(add, v)
    coverage = len(combos) / total if total else 1.0
    memory_ok = mem <= tolerance
    return DescribabilityReport(
        memory_ok, mem, add, tolerance, bool(memory_ok and add <= tolerance), coverage, queries,
    )


def check_describability_recorded(levels, outputs, m: int, n: int, tolerance: float = 1e-9):
    """Describability check on a recorded quantised record.

    Windows are matched by exact level equality.  Repeated windows with
    different outputs count as memory violations.  Raises
    :class:`InsufficientQueries` when the record lacks the all-minimum
    window or every complete impulse quadruple.
    """
    k = np.asarray(levels, dtype=np.int64)
    y = np.asarray(outputs, dtype=float)
    if k.size != y.size:
        raise SeriesTooShort("outputs must align with levels")
    seen: dict = {}
    for i in range(m - 1, k.size):
        seen.setdefault(tuple(k[i - m + 1:i + 1]), []).append(y[i])
    mem = max((max(v) - min(v) for v in seen.values()), default=0.0)
    resp = {w: float(np.mean(v)) for w, v in seen.items()}
    star = (1,) * m
    if star not in resp:
        raise InsufficientQueries("record never shows the all-minimum window")
    add, tested = 0.0, 0
    for w, val in resp.items():
        hot = [i for i, lv in enumerate(w) if lv != 1]
        if len(hot) != 2:
            continue
        p, q = hot
        wp = tuple(w[i] if i == p else 1 for i in range(m))
        wq = tuple(w[i] if i == q else 1 for i in range(m))
        if wp in resp and wq in resp:
            add = max(add, abs(resp[star] + val - resp[wp] - resp[wq]))
            tested += 1
    if tested == 0:
        raise InsufficientQueries("no complete impulse quadruple in the record")
    total = m * (m - 1) // 2 * (n - 1) ** 2
    memory_ok = mem <= tolerance
    return DescribabilityReport(
        memory_ok, mem, add, tolerance, bool(memory_ok and add <= tolerance),
        tested / total, len(seen),
    )


def model_black_box(model: UrysohnModel):
    """Black box answering with the quantised model output."""
    def box(history):
        return eval_levels(model.matrix, quantize_levels(history, model))[-1]

    return box


def fir_black_box(h):
    """Black box for ``y_i = sum_j h_j x_{i-j+1}`` (``h[0]`` multiplies the newest input)."""
    h = np.asarray(h, dtype=float)

    def box(history):
        recent = np.asarray(history, dtype=float)[::-1][:h.size]
        return float(h[:recent.size] @ recent)

    return box


def feedback_black_box(a: float = 0.5):
    """Black box for ``y_i = a y_{i-1} + x_i`` started from ``y = 0``; has no finite memory."""

    def box(history):
        y = 0.0
        for x in history:
            y = a * y + x
        return y

    return box


class Structure(str, Enum):
    LINEAR = "linear"
    HAMMERSTEIN = "hammerstein"
    GENERAL = "general_urysohn"


@dataclass
class StructureReport:
    kind: Structure
    singular_ratio: float
    affine_residual: float
    singular_values: list
    tolerance: float

    def to_dict(self):
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def classify_structure(model: UrysohnModel, tolerance: float = 1e-6) -> StructureReport:
    """Decide whether a Urysohn matrix is linear, Hammerstein or general.

    Rows are centred first: adding ``c_j`` to row ``j`` with ``sum(c) = 0``
    leaves every output unchanged, so only the centred matrix is identifiable.
    Hammerstein means the centred matrix is rank one (second singular value
    at most ``tolerance`` times the first).  Linear means every row is
    affine in the input value (max fit residual at most ``tolerance`` times
    the largest entry).
    """
    U = model.matrix
    scale = float(np.abs(U).max())
    centred = U - U.mean(axis=1, keepdims=True)
    s = np.linalg.svd(centred, compute_uv=False)
    ratio = float(s[1] / s[0]) if s.size > 1 and s[0] > 0 else 0.0
    x = model.level_values()
    A = np.column_stack([np.ones_like(x), x])
    coef = np.linalg.lstsq(A, U.T, rcond=None)[0]
    resid = float(np.abs(A @ coef - U.T).max() / scale) if scale > 0 else 0.0
    if resid <= tolerance:
        kind = Structure.LINEAR
    elif ratio <= tolerance:
        kind = Structure.HAMMERSTEIN
    else:
        kind = Structure.GENERAL
    return StructureReport(kind, ratio, resid, s.tolist(), tolerance)
