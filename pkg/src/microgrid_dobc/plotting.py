"""Matplotlib figures written to files (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dobc import design_q  # noqa: E402
from .lti import bode, poles  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_comparison(traces: dict, channel: str, path: Path, ylabel: str, title: str = "") -> Path:
    """Overlay one channel from several labelled traces."""
    fig, ax = plt.subplots(figsize=(7, 3.6))
    for label, tr in traces.items():
        ax.plot(tr.time, tr[channel], label=label, lw=1.2)
    ax.set_xlabel("time [s]")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_estimate(trace, truth: str, path: Path, title: str = "") -> Path:
    """Disturbance estimate against the signal it tracks."""
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.plot(trace.time, trace[truth], label=truth, lw=1.5)
    ax.plot(trace.time, trace["d_hat"], "--", label="d_hat", lw=1.2)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("power [pu]")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_q_bode(lambdas, order: int, path: Path, omega=None) -> Path:
    omega = np.logspace(-1, 4, 400) if omega is None else np.asarray(omega)
    fig, (ag, ap) = plt.subplots(2, 1, figsize=(7, 5.5), sharex=True)
    for lam in lambdas:
        pts = bode(design_q(lam, order).tf, omega)
        ag.semilogx(omega, [p.gain_db for p in pts], label=f"lambda={lam:g}")
        ap.semilogx(omega, [p.phase_deg for p in pts])
    ag.set_ylabel("gain [dB]")
    ap.set_ylabel("phase [deg]")
    ap.set_xlabel("omega [rad/s]")
    ag.set_title(f"Q filter, order {order}")
    for a in (ag, ap):
        a.grid(alpha=0.3, which="both")
    ag.legend(fontsize=8)
    return _save(fig, path)


def plot_sweep(names, values, argmax, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 3.6))
    colors = ["tab:red" if i == argmax else "tab:blue" for i in range(len(values))]
    ax.bar(range(len(values)), values, color=colors)
    ax.set_xticks(range(len(values)), names, rotation=60, fontsize=7)
    ax.set_ylabel("max |df| [Hz]")
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, path)


def plot_pole_map(models: dict, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, m in models.items():
        p = poles(m)
        ax.plot(p.real, p.imag, "x", ms=8, label=label)
    ax.axvline(0, color="k", lw=0.8)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)
