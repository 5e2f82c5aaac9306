"""PNG figures written next to the CSV reports.

Uses :class:`matplotlib.figure.Figure` directly so no GUI backend or pyplot
global state is involved.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

__all__ = ["plot_acf", "plot_pdf", "plot_transition", "plot_report", "plot_trajectories"]


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    return path


def plot_acf(path, curves: dict, reference=None, title: str = "autocorrelation"):
    """``curves`` maps labels to AcfCurve; ``reference`` is an optional ``(times, values)`` pair."""
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    for label, c in curves.items():
        ax.plot(c.times, c.values, label=label)
    if reference is not None:
        ax.plot(*reference, "k--", lw=1, label="reference")
    ax.set_xlabel("lag time")
    ax.set_ylabel("ACF")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_pdf(path, estimates: dict, reference=None, title: str = "density"):
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    for label, p in estimates.items():
        ax.plot(p.grid, p.density, label=label)
    if reference is not None:
        ax.plot(*reference, "k--", lw=1, label="reference")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_transition(path, curve, fit=None):
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    ax.plot(curve.times, curve.values, label="C_AB / C_A")
    if fit is not None:
        lo, hi = fit.window
        t = np.linspace(lo, hi, 50)
        ax.plot(t, fit.intercept + fit.k_ab * t, "r-", lw=2,
                label=f"k_AB = {fit.k_ab:.4g}, R2 = {fit.r2:.3f}")
        ax.axvspan(lo, hi, color="0.9")
    ax.set_xlabel("t")
    ax.set_ylabel("C_AB(t) / C_A")
    ax.legend()
    return _save(fig, path)


def plot_report(path, report):
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    it = [e.iteration for e in report.entries]
    ax.semilogy(it, [e.train_loss for e in report.entries], label="train")
    ax.semilogy(it, [e.val_loss for e in report.entries], label="validation")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend()
    return _save(fig, path)


def plot_trajectories(path, ensemble, count: int = 4, component: int = 0):
    fig = Figure(figsize=(6, 3))
    ax = fig.add_subplot()
    t = np.arange(ensemble.time) * ensemble.dt
    for i in range(min(count, ensemble.batch)):
        ax.plot(t, ensemble.data[i, :, component], lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    return _save(fig, path)
