"""Figure rendering for solve and study reports.

Every plotting entry point writes a PNG next to the CSV it illustrates and
returns the path.  The Agg backend keeps this usable in headless runs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .grid import CellField

__all__ = ["save_field_png", "save_iterations_png", "save_rate_png"]


def save_field_png(field: CellField, path, title: str | None = None):
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    img = ax.imshow(
        field.as_grid(),
        origin="lower",
        extent=(0.0, 1.0, 0.0, 1.0),
        cmap="viridis",
        interpolation="nearest",
    )
    fig.colorbar(img, ax=ax, shrink=0.85)
    if title:
        ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_iterations_png(rows, path):
    """Average linear iterations per outer step against resolution."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    groups: dict[tuple, list] = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        groups.setdefault((row["solver"], row["beta"]), []).append(
            (row["n"], row["avg_lin_iters"])
        )
    for (solver, beta), pts in sorted(groups.items()):
        pts.sort()
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            label=f"{solver}, beta={beta:g}",
        )
    ax.set_xscale("log", base=2)
    ax.set_xlabel("n")
    ax.set_ylabel("avg linear iterations per outer step")
    ax.grid(True, alpha=0.3)
    if groups:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_rate_png(rows, path):
    """Two-grid spectral distance and its driver h + mu against resolution."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ns = [r["n"] for r in rows]
    ax.loglog(ns, [r["distance"] for r in rows], marker="o", label="spectral distance")
    ax.loglog(ns, [r["driver"] for r in rows], marker="s", label="h + band area")
    ax.set_xlabel("n")
    ax.set_ylabel("value")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
