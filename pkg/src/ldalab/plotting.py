"""Static figures for sweep, residual and verification reports (Agg backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_elda_sweep(samples, estimate, path, reference=None):
    """``e_Delta`` against ``1/l`` with the fitted model and optional reference line."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    x = np.array([1 / s.l for s in samples])
    y = np.array([s.value for s in samples])
    ax.plot(x, y, "o", label="samples")
    if estimate is not None:
        xs = np.linspace(0, x.max() * 1.05, 100)
        # in x = 1/l with delta = r l: e_inf + (a/r) x^2 + b x
        r = np.mean([s.delta / s.l for s in samples])
        fit = estimate.e_inf + estimate.a / r * xs ** 2 + estimate.b * xs
        ax.plot(xs, fit, "-", label=f"fit, e_inf={estimate.e_inf:.5g}")
    if reference is not None:
        ax.axhline(reference, color="k", ls=":", label="reference")
    ax.set_xlabel("1 / l")
    ax.set_ylabel("energy per volume")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_residual(labels, normalized, path):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.loglog(labels, normalized, "o-")
    ax.set_xlabel("dilation N")
    ax.set_ylabel("residual / mass")
    return _save(fig, path)


def plot_margins(reports, path):
    """Smallest margin per check on a symlog axis (negative means violated)."""
    fig, ax = plt.subplots(figsize=(6, 0.4 * len(reports) + 1.5))
    names = [r.check_id for r in reports]
    vals = [r.worst_margin if np.isfinite(r.worst_margin) else 0.0 for r in reports]
    colors = ["tab:red" if r.verdict == "fail" else "tab:green" for r in reports]
    ax.barh(names, vals, color=colors)
    ax.set_xscale("symlog", linthresh=1e-12)
    ax.axvline(0, color="k", lw=0.8)
    ax.set_xlabel("worst margin")
    return _save(fig, path)
