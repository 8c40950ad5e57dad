"""PNG figures for the CLI reports.

Figures are built on :class:`matplotlib.figure.Figure` directly, so no global
backend is touched, and saved without a software tag so that reruns are
byte-identical.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

__all__ = ["plot_timeseries", "plot_split", "plot_fd", "plot_decay"]

_META = {"Software": None}


def _save(fig: Figure, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)


def plot_timeseries(traj, path) -> None:
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for key in ("L2", "H1", "L4"):
        ax.plot(traj.times, traj.monitors[key], label=key)
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.legend()
    _save(fig, path)


def plot_split(report, path) -> None:
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.plot(report.times, report.stokes_L2, label="Stokes part")
    ax.plot(report.times, report.nonlinear_L2, label="nonlinear part")
    ax.set_xlabel("t")
    ax.set_ylabel("L2 norm")
    ax2 = ax.twinx()
    ax2.semilogy(report.times, np.maximum(report.discrepancy, 1e-300), "k:", label="discrepancy")
    ax2.set_ylabel("discrepancy")
    ax.legend(loc="upper left")
    _save(fig, path)


def plot_fd(report, path) -> None:
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    ax.loglog(report.epsilons, report.remainder_1, "o-", label=f"first order, slope {report.order_1:.3f}")
    ax.loglog(report.epsilons, report.remainder_2, "s-", label=f"second order, slope {report.order_2:.3f}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("remainder")
    ax.legend()
    _save(fig, path)


def plot_decay(result, path) -> None:
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    ax.semilogy(result.times, np.maximum(result.distance, 1e-300))
    lo, hi = result.window
    if hi > lo and np.isfinite(result.alpha_fit):
        t = result.times[lo:hi]
        ax.semilogy(t, result.distance[lo] * np.exp(-result.alpha_fit * (t - t[0])), "--", label=f"rate {result.alpha_fit:.4g}")
        ax.legend()
    ax.set_xlabel("t")
    ax.set_ylabel("distance to steady state")
    _save(fig, path)
