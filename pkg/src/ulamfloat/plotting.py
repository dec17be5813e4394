"""Matplotlib figures for reports, rendered off-screen.

Figures are written with fixed metadata and a fixed SVG hash salt so
repeated runs produce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_convergence", "plot_deficits", "plot_sandwich", "save_figure"]

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "ulamfloat",
    "path.simplify": False,
}


def save_figure(fig, path) -> Path:
    """Save as PNG or SVG (by suffix) without timestamps, then close the figure."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = path.suffix.lstrip(".").lower() or "png"
    meta = {"Software": None} if fmt == "png" else {"Date": None, "Creator": None}
    fig.savefig(path, format=fmt, metadata=meta, dpi=120)
    plt.close(fig)
    return path


def _fit_curve(fit, deltas):
    grid = np.geomspace(min(deltas), max(deltas), 100)
    return grid, fit.predict(grid)


def plot_convergence(reports, path, title: str | None = None) -> Path:
    """Scaled deficits against ``delta`` with the fitted curves and reference limits."""
    if not isinstance(reports, (list, tuple)):
        reports = [reports]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for rep in reports:
            d = np.array([r[0] for r in rep.rows])
            s = np.array([r[2] for r in rep.rows])
            (line,) = ax.semilogx(d, s, "o", label=rep.quantity)
            gx, gy = _fit_curve(rep.fit, d)
            ax.semilogx(gx, gy, "-", color=line.get_color(), lw=1)
            ax.axhline(rep.reference, color=line.get_color(), ls="--", lw=0.8)
        ax.set_xlabel("delta")
        ax.set_ylabel("scaled deficit")
        if title:
            ax.set_title(title)
        ax.legend()
        return save_figure(fig, path)


def plot_deficits(rows, fit, reference, path, label: str = "deficit") -> Path:
    """Body deficits scaled by ``delta^(-2/(m+1))`` with the fit and reference."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        d = np.array([r.delta for r in rows])
        s = np.array([r.scaled for r in rows])
        ax.semilogx(d, s, "o", label=label)
        if fit is not None:
            gx, gy = _fit_curve(fit, d)
            ax.semilogx(gx, gy, "-", lw=1, label="fit")
        if reference is not None:
            ax.axhline(reference, ls="--", lw=0.8, color="k", label="reference")
        ax.set_xlabel("delta")
        ax.set_ylabel("scaled deficit")
        ax.legend()
        return save_figure(fig, path)


def plot_sandwich(report, path) -> Path:
    """``psi``, the Ulam floating function and the floating function along a 1D probe set."""
    x = np.asarray(report.probes)[:, 0]
    order = np.argsort(x)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x[order], report.psi_values[order], label="psi")
        ax.plot(x[order], report.ulam_values[order], label="Ulam floating")
        ax.plot(x[order], report.floating_values[order], label="floating")
        ax.set_xlabel("x")
        ax.legend()
        return save_figure(fig, path)
