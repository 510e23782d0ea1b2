"""Static figures for signals, matrices, residual traces and error tables.

Every function draws on a fresh figure and saves it to ``path``; nothing is
shown interactively.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 120


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_signals(path, series: dict, title=None, xlim=None, secondary=()):
    """Overlay named ``SignalSeries`` on a shared time axis.

    Names listed in ``secondary`` go on a right-hand axis, which keeps a
    small output readable next to its control.
    """
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax2 = ax.twinx() if secondary else None
    handles = []
    for i, (label, s) in enumerate(series.items()):
        target = ax2 if label in secondary else ax
        handles += target.plot(s.t, s.values, lw=0.9, label=label, color=f"C{i}")
    ax.set_xlabel("t")
    if ax2 is not None:
        ax2.set_ylabel(", ".join(secondary))
    if xlim is not None:
        ax.set_xlim(*xlim)
    if title:
        ax.set_title(title)
    ax.legend(handles=handles, loc="upper right", fontsize="small")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_matrix(path, model, title=None):
    """Heat map of the matrix: rows are lags, columns input levels."""
    U = model.matrix
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(U, aspect="auto", origin="upper", cmap="viridis",
                   extent=(0.5, U.shape[1] + 0.5, U.shape[0] + 0.5, 0.5))
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("level k")
    ax.set_ylabel("lag j")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_residuals(path, residuals, title=None):
    """Absolute identification residual per step, log scale."""
    r = np.abs(np.asarray(residuals, dtype=float))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.semilogy(np.arange(1, r.size + 1), np.maximum(r, np.finfo(float).tiny), lw=0.6)
    ax.set_xlabel("step")
    ax.set_ylabel("|residual|")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3, which="both")
    return _save(fig, path)


def plot_convergence(path, steps, errors, title=None):
    """Validation error (percent) of matrix snapshots against identification steps."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(steps, 100 * np.asarray(errors), marker="o", ms=3)
    ax.set_xlabel("identification step")
    ax.set_ylabel("error, %")
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3, which="both")
    return _save(fig, path)


def plot_table(path, summary, group: str, axis: str, title=None, reference=None):
    """Mean error (percent) with 95% bars, one line per value of ``group``.

    ``summary`` holds ``CellSummary`` rows; ``axis`` names the field on the
    horizontal axis.  ``reference`` maps a summary row to a published value
    drawn as an open marker.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for g in sorted({getattr(s, group) for s in summary}):
        rows = sorted((s for s in summary if getattr(s, group) == g), key=lambda s: getattr(s, axis))
        xs = [getattr(s, axis) for s in rows]
        ci = [0.0 if np.isnan(s.ci95) else 100 * s.ci95 for s in rows]
        line = ax.errorbar(xs, [100 * s.mean for s in rows], yerr=ci, marker="o", capsize=3,
                           label=f"{group}={g:g}")
        if reference is not None:
            ref = [reference(s) for s in rows]
            pts = [(x, r) for x, r in zip(xs, ref) if r is not None]
            if pts:
                ax.plot(*zip(*pts), ls="none", marker="s", mfc="none",
                        color=line[0].get_color())
    ax.set_xlabel(axis)
    ax.set_ylabel("error, %")
    if len({getattr(s, axis) for s in summary}) > 1 and min(getattr(s, axis) for s in summary) > 0:
        ax.set_xscale("log")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    ax.grid(alpha=0.3, which="both")
    return _save(fig, path)
