"""Static figures for risk scans and limit curves.

Figures are rendered with the Agg backend to fixed 800x500 SVGs. A fixed
hash salt and a blank date make repeated renders byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .kahler_geometry import q_limit  # noqa: E402

FIGSIZE = (8.0, 5.0)
DPI = 100
SVG_SALT = "specshrink"


def _save(fig, path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", dpi=DPI, metadata={"Date": None})
    plt.close(fig)


def _new_axes(title: str):
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    ax.set_title(title)
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.grid(alpha=0.3)
    return fig, ax


def plot_risk_scan(rows: list, path) -> None:
    """Z estimates with 2-stderr bands over the limit curve, one series per (N, kappa).

    ``rows`` are dicts with keys ``xi, kappa, n, z_mean, z_stderr``.
    """
    fig, ax = _new_axes("Normalized risk difference vs Jeffreys predictive")
    series = sorted({(r["n"], r["kappa"]) for r in rows})
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    fine = np.linspace(-0.97, 0.97, 389)
    for i, (n, k) in enumerate(series):
        sel = sorted((r for r in rows if r["n"] == n and r["kappa"] == k), key=lambda r: r["xi"])
        x = np.array([r["xi"] for r in sel])
        z = np.array([r["z_mean"] for r in sel])
        se = np.array([r["z_stderr"] for r in sel])
        col = colors[i % len(colors)]
        ax.fill_between(x, z - 2 * se, z + 2 * se, color=col, alpha=0.2, lw=0)
        ax.plot(x, z, "o-", color=col, ms=3, lw=1.2, label=f"Z, N={n}, kappa={k:g}")
        ax.plot(fine, q_limit(fine, k), "--", color=col, lw=1.0, label=f"limit, kappa={k:g}")
    ax.set_xlabel("xi (real AR(1) root)")
    ax.set_ylabel("N^2 (R_Jeffreys - R_kappa)")
    ax.set_xlim(-1, 1)
    ax.legend(loc="lower center", fontsize=8, ncol=2)
    _save(fig, path)


def plot_q_limits(kappas, path) -> None:
    """Limit curves of the normalized risk difference for several kappa."""
    fig, ax = _new_axes("Limit of the normalized risk difference, p = 1")
    xi = np.linspace(-0.95, 0.95, 381)
    for k in kappas:
        ax.plot(xi, q_limit(xi, k), lw=1.4, label=f"kappa={k:g}")
    ax.set_xlabel("|xi|")
    ax.set_ylabel("limit value")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_ladder(n_values, means, stderrs, limit: float, path, title: str = "Convergence ladder") -> None:
    fig, ax = _new_axes(title)
    n = np.asarray(n_values)
    m = np.asarray(means)
    s = np.asarray(stderrs)
    ax.errorbar(n, m, yerr=2 * s, fmt="o-", capsize=3, label="Z estimate +/- 2 se")
    ax.axhline(limit, ls="--", color="k", lw=1.0, label="limit")
    ax.set_xscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("Z")
    ax.legend(fontsize=8)
    _save(fig, path)
