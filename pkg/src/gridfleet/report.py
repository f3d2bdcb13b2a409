"""Figure rendering for benchmark results: make-span box plots per regime."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_boxplots(
    rows: list[dict],
    out_path: str | Path,
    algos: list[str] | None = None,
    regimes: list[str] | None = None,
) -> Path:
    """Render one box plot of make-spans per regime, grouped by algorithm.

    ``rows`` are parsed runs.csv records; timeout rows are dropped from the
    boxes and reported in the subplot title instead.
    """
    if not rows:
        raise ValueError("no rows to plot")
    if algos is None:
        algos = list(dict.fromkeys(r["algo"] for r in rows))
    if regimes is None:
        regimes = list(dict.fromkeys(r["regime"] for r in rows))

    ncols = len(regimes)
    fig, axes = plt.subplots(
        1, ncols, figsize=(3.2 * ncols, 3.6), squeeze=False, sharey=False
    )
    for col, regime in enumerate(regimes):
        ax = axes[0][col]
        data = []
        timeouts = 0
        for algo in algos:
            spans = [
                float(r["makespan"])
                for r in rows
                if r["algo"] == algo and r["regime"] == regime and r["makespan"] != ""
            ]
            timeouts += sum(
                1
                for r in rows
                if r["algo"] == algo and r["regime"] == regime and r["makespan"] == ""
            )
            data.append(spans)
        ax.boxplot(data, tick_labels=algos)
        title = f"v = {regime}"
        if timeouts:
            title += f" ({timeouts} timeouts)"
        ax.set_title(title, fontsize=10)
        ax.grid(True, alpha=0.3, axis="y")
        if col == 0:
            ax.set_ylabel("make-span (ticks)")
        ax.tick_params(axis="x", labelrotation=45, labelsize=8)
    fig.suptitle("Make-span by algorithm and speed regime", fontsize=11)
    fig.tight_layout(rect=(0, 0, 1, 0.95))
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
