"""File formats: model JSON, signal/pair CSV, residual traces and run manifests.

Floats are written with ``repr`` (shortest round-trip form), so every
save/load cycle is lossless.
"""
from __future__ import annotations

import contextlib
import csv
import json
import math
import os
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import LengthMismatch, MalformedModel
from .operator import SignalSeries, UrysohnModel

__all__ = [
    "model_to_dict", "model_from_dict", "save_model", "load_model", "load_checkpoint",
    "write_signal", "read_signal", "write_pairs", "read_pairs", "write_residuals",
    "RunManifest",
]


def _fmt(v) -> str:
    return repr(float(v))


def model_to_dict(model: UrysohnModel, counters=None) -> dict:
    d = {
        "m": model.m,
        "n": model.n,
        "x_min": float(model.x_min),
        "x_max": float(model.x_max),
        "matrix": [float(v) for v in model.matrix.ravel()],
    }
    if model.dims is not None:
        d["dims"] = list(model.dims)
    if model.breakpoints is not None:
        d["breakpoints"] = [float(v) for v in model.breakpoints]
    if counters is not None:
        counters = np.asarray(counters)
        if counters.shape != model.matrix.shape:
            raise LengthMismatch("counters shape must match the matrix")
        d["counters"] = [int(c) for c in counters.ravel()]
    return d


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def model_from_dict(d) -> tuple[UrysohnModel, np.ndarray | None]:
    """Validate a decoded model object; returns ``(model, counters)``."""
    if not isinstance(d, dict):
        raise MalformedModel([("model", "top level must be a JSON object")])
    problems = []
    for key in ("m", "n", "x_min", "x_max", "matrix"):
        if key not in d:
            problems.append((key, "missing"))
    if problems:
        raise MalformedModel(problems)
    m, n = d["m"], d["n"]
    if not _is_int(m) or m < 1:
        problems.append(("m", f"must be a positive integer, got {m!r}"))
    if not _is_int(n) or n < 2:
        problems.append(("n", f"must be an integer >= 2, got {n!r}"))
    for key in ("x_min", "x_max"):
        if not _is_num(d[key]) or not math.isfinite(d[key]):
            problems.append((key, f"must be a finite number, got {d[key]!r}"))
    matrix = d["matrix"]
    if not isinstance(matrix, list) or not all(_is_num(v) for v in matrix):
        problems.append(("matrix", "must be a flat array of numbers"))
    elif not all(math.isfinite(v) for v in matrix):
        problems.append(("matrix", "entries must be finite"))
    if problems:
        raise MalformedModel(problems)
    if len(matrix) != m * n:
        problems.append(("matrix", f"expected m*n={m * n} entries, got {len(matrix)}"))
    if not d["x_min"] < d["x_max"]:
        problems.append(("x_min/x_max", f"need x_min < x_max, got {d['x_min']} >= {d['x_max']}"))
    dims = d.get("dims")
    if dims is not None:
        if not isinstance(dims, list) or not all(_is_int(v) and v >= 1 for v in dims):
            problems.append(("dims", "must be a list of positive integers"))
        elif math.prod(dims) != n:
            problems.append(("dims", f"product {math.prod(dims)} != n={n}"))
    counters = d.get("counters")
    if counters is not None:
        if not isinstance(counters, list) or not all(_is_int(v) and v >= 0 for v in counters):
            problems.append(("counters", "must be a list of non-negative integers"))
        elif len(counters) != m * n:
            problems.append(("counters", f"expected m*n={m * n} entries, got {len(counters)}"))
    bp = d.get("breakpoints")
    if bp is not None and (not isinstance(bp, list) or not all(_is_num(v) for v in bp)):
        problems.append(("breakpoints", "must be an array of numbers"))
    if problems:
        raise MalformedModel(problems)
    model = UrysohnModel(
        np.array(matrix, dtype=float).reshape(m, n), d["x_min"], d["x_max"],
        dims=dims, breakpoints=bp,
    )
    if counters is not None:
        counters = np.array(counters, dtype=np.int64).reshape(m, n)
    return model, counters


def save_model(model: UrysohnModel, destination, counters=None) -> None:
    """Write ``model`` (and optional update counters) as JSON to a path or file."""
    text = json.dumps(model_to_dict(model, counters))
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w") as fh:
            fh.write(text)


def _read_json(source):
    try:
        if hasattr(source, "read"):
            return json.load(source)
        with open(source) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedModel([("json", f"line {exc.lineno}: {exc.msg}")]) from exc


def load_checkpoint(source) -> tuple[UrysohnModel, np.ndarray | None]:
    return model_from_dict(_read_json(source))


def load_model(source) -> UrysohnModel:
    return load_checkpoint(source)[0]


class ParseError(ValueError):
    """CSV content error; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def _ctx(target, mode):
    if hasattr(target, "write") or hasattr(target, "read"):
        return contextlib.nullcontext(target)
    return open(target, mode, newline="")


def write_signal(series: SignalSeries, destination) -> None:
    """Write a ``t,value`` CSV."""
    t = series.t
    with _ctx(destination, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for ti, v in zip(t, series.values):
            w.writerow([_fmt(ti), _fmt(v)])


def _read_rows(source, header):
    with _ctx(source, "r") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1)
        if [h.strip() for h in first] != header:
            raise ParseError(f"expected header {','.join(header)!r}, got {','.join(first)!r}", 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ParseError(f"non-numeric field in {row!r}", lineno)
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", lineno)
            rows.append(vals)
    if not rows:
        raise ParseError("no data rows")
    return np.array(rows)


def _infer_dt(t):
    if t.size == 1:
        return 1.0
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (t.size - 1)
    if not dt > 0:
        raise ParseError("t must be increasing")
    # measure against the first step so the error names the first odd row
    bad = np.flatnonzero(np.abs(steps - steps[0]) > 1e-6 * dt + 1e-12 * np.abs(t).max())
    if bad.size:
        raise ParseError("t is not uniformly spaced", int(bad[0]) + 3)
    return float(dt)


def read_signal(source) -> SignalSeries:
    data = _read_rows(source, ["t", "value"])
    t = data[:, 0]
    return SignalSeries(data[:, 1], _infer_dt(t), t0=float(t[0]))


def write_pairs(x: SignalSeries, y: SignalSeries, destination) -> None:
    """Write a ``t,x,y`` CSV of aligned input/output samples."""
    if len(x) != len(y):
        raise LengthMismatch(f"input has {len(x)} samples, output {len(y)}")
    with _ctx(destination, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y"])
        for ti, a, b in zip(x.t, x.values, y.values):
            w.writerow([_fmt(ti), _fmt(a), _fmt(b)])


def read_pairs(source) -> tuple[SignalSeries, SignalSeries]:
    data = _read_rows(source, ["t", "x", "y"])
    t = data[:, 0]
    dt = _infer_dt(t)
    return SignalSeries(data[:, 1], dt, t0=float(t[0])), SignalSeries(data[:, 2], dt, t0=float(t[0]))


def write_residuals(residuals, destination) -> None:
    """Write a ``step,residual`` CSV; steps count from 1."""
    with _ctx(destination, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "residual"])
        for i, r in enumerate(residuals, start=1):
            w.writerow([i, _fmt(r)])


def _now():
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    """Everything needed to rerun a command; timestamps are informational."""

    command: str
    config: dict
    seeds: list = field(default_factory=list)
    argv: list = field(default_factory=list)
    tool_version: str = ""
    python: str = field(default_factory=lambda: platform.python_version())
    numpy: str = field(default_factory=lambda: np.__version__)
    started: str = field(default_factory=_now)
    finished: str | None = None

    def finish(self):
        self.finished = _now()
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (os.PathLike,)):
        return os.fspath(v)
    return str(v)
