"""Static figures for sweep reports."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .exponents import ext  # noqa: E402

COLORS = {"inside-stable": "#2b7bba", "outside-growing": "#d7301f", "boundary": "#969696"}
MARKERS = {"inside-stable": "o", "outside-growing": "^", "boundary": "s"}


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(direction="out", length=3)


def riesz_band(p, q_plus: float, n: int):
    """(lo, hi) of the power-weight alpha band for the Riesz transform at p, or None."""
    if not 1 < p < q_plus:
        return None
    lo = -n if math.isinf(q_plus) else n * (p / q_plus - 1)
    return lo, n * (p - 1)


def plot_sweep(result, path, q_plus: float = math.inf, n: int = 2, title: str | None = None):
    """Cells of a (p, alpha) sweep coloured by verdict over the certified band."""
    ps = [float(ext(p)) for p in result.p_list]
    alphas = [float(a) for a in result.alpha_list]
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    _style(ax)
    lo_p = min(ps + [1.0])
    hi_p = max(ps) * 1.05 + 0.1
    grid = np.linspace(1.0 + 1e-6, min(hi_p, q_plus - 1e-6) if math.isfinite(q_plus) else hi_p, 200)
    bands = [riesz_band(p, q_plus, n) for p in grid]
    keep = [i for i, b in enumerate(bands) if b is not None]
    if keep:
        ax.fill_between(grid[keep], [bands[i][0] for i in keep], [bands[i][1] for i in keep],
                        color="#c6dbef", alpha=0.6, lw=0, label="certified range")
    if math.isfinite(q_plus):
        ax.axvline(q_plus, color="k", lw=0.8, ls="--")
        ax.text(q_plus, ax.get_ylim()[1] if alphas else 0, r" $q_+$", va="top", fontsize=8)
    seen = set()
    for p, pp in zip(result.p_list, ps):
        for a, aa in zip(result.alpha_list, alphas):
            v = result.verdicts[(p, a)]
            ax.scatter([pp], [aa], c=COLORS[v], marker=MARKERS[v], s=36, zorder=3,
                       label=v if v not in seen else None, edgecolors="k", linewidths=0.4)
            seen.add(v)
    ax.set_xlim(lo_p, hi_p)
    if alphas:
        pad = 0.5 + 0.1 * (max(alphas) - min(alphas))
        ax.set_ylim(min(alphas) - pad, max(alphas) + pad)
    ax.set_xlabel("$p$")
    ax.set_ylabel(r"$\alpha$")
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(frameon=False, fontsize=7, loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_growth(result, path):
    """Norm estimate against N for every (p, alpha) cell, log-log."""
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    _style(ax)
    Ns = np.asarray(result.N_list, dtype=float)
    for p in result.p_list:
        for a in result.alpha_list:
            vals = result.values(p, a)
            if any(v is None for v in vals):
                continue
            v = result.verdicts[(p, a)]
            ax.loglog(Ns, vals, marker=MARKERS[v], color=COLORS[v], lw=1,
                      label=f"p={float(ext(p)):g}, a={float(a):g}")
    ax.set_xlabel("$N$")
    ax.set_ylabel("norm lower bound")
    ax.legend(frameon=False, fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
