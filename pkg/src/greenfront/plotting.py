"""Figures written next to the tabular reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .mobo.pareto import MAXIMIZE  # noqa: E402
from .tracking import _objective_specs, frontier_report  # noqa: E402

FIGSIZE = (5.0, 3.6)


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.grid(alpha=0.3, linewidth=0.5)


def plot_frontier(records, path, objectives=None, title=None):
    """Scatter every ok trial and draw the Pareto frontier as a staircase.

    ``objectives[0]`` goes on the y axis and ``objectives[1]`` on the x
    axis, which puts performance against energy efficiency by default.
    """
    objectives = _objective_specs(objectives)
    if len(objectives) != 2:
        raise ValueError("frontier plots need exactly two objectives")
    yname, xname = objectives[0].name, objectives[1].name
    ok = [r for r in records if r.status == "ok"]
    _, rows = frontier_report(records, objectives, parameters=[])

    fig, ax = plt.subplots(figsize=FIGSIZE)
    for phase, marker, colour in (("sobol", "s", "0.55"), ("mobo", "o", "tab:blue")):
        pts = [r for r in ok if r.phase == phase]
        if pts:
            ax.scatter([r.objectives[xname] for r in pts], [r.objectives[yname] for r in pts],
                       s=14, marker=marker, color=colour, alpha=0.7, label=phase, linewidths=0)
    if rows:
        front = sorted(rows, key=lambda row: row[1],
                       reverse=objectives[1].direction != MAXIMIZE)
        ax.step([r[1] for r in front], [r[0] for r in front], where="pre",
                color="tab:red", linewidth=1.2)
        ax.scatter([r[1] for r in front], [r[0] for r in front], s=28, color="tab:red",
                   zorder=3, label="Pareto front")
    ax.set_xlabel(xname)
    ax.set_ylabel(yname)
    if title:
        ax.set_title(title)
    _style(ax)
    if ok:
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_metric_pair(records, xname, yname, path, r=None):
    ok = [rec for rec in records if rec.status == "ok"]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.scatter([rec.metric(xname) for rec in ok], [rec.metric(yname) for rec in ok],
               s=14, color="tab:blue", linewidths=0)
    ax.set_xlabel(xname)
    ax.set_ylabel(yname)
    if r is not None:
        ax.set_title(f"Pearson r = {r:.2f}", fontsize=9)
    _style(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
