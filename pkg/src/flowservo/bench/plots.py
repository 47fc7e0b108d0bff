"""Figures written next to the CSV output. Uses the Agg canvas, no display needed."""
from __future__ import annotations

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

COLORS = {"ours": "tab:red", "naive-fb": "tab:blue", "radial-fb": "tab:green"}


def _save(fig: Figure, path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=110, metadata={"Software": None})


def plot_trajectories(cfg, results: dict, path) -> None:
    """Top-down view of the buildings and every controller's path."""
    fig = Figure(figsize=(6, 5))
    ax = fig.add_subplot(1, 1, 1)
    for b in cfg.buildings:
        lo, hi = b.min_corner, b.max_corner
        ax.add_patch(Rectangle((lo[0], lo[1]), hi[0] - lo[0], hi[1] - lo[1], color="0.6"))
        ax.text((lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, str(b.id), ha="center", va="center", fontsize=8)
    for name, res in results.items():
        pos = res.positions
        ax.plot(pos[:, 0], pos[:, 1], color=COLORS.get(name), lw=1.5,
                label=f"{name} ({res.outcome.value}, {res.min_dist:.2f} m)")
        if res.outcome.value == "Collision":
            ax.plot(pos[-1, 0], pos[-1, 1], "x", color=COLORS.get(name), ms=9)
    ax.plot(*cfg.start.position[:2], "o", color="gold", mec="k", label="start")
    ax.plot(*cfg.goal[:2], "*", color="red", ms=12, mec="k", label="goal")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(cfg.name)
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    _save(fig, path)


def plot_success_rates(summary, path) -> None:
    fig = Figure(figsize=(4, 3))
    ax = fig.add_subplot(1, 1, 1)
    names = summary.controllers
    rates = [float(summary.success_rate(c)) * 100 for c in names]
    ax.bar(names, rates, color=[COLORS.get(c, "0.5") for c in names])
    for i, c in enumerate(names):
        n = sum(r.controller == c for r in summary.records)
        ax.text(i, rates[i] + 1, f"{summary.successes(c)}/{n}", ha="center", fontsize=8)
    ax.set_ylim(0, 110)
    ax.set_ylabel("success rate [%]")
    fig.tight_layout()
    _save(fig, path)
