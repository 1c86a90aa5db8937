"""Target-control geometries and the matching inactive-set test masks.

The default target is a step function supported on two disks strictly inside
the domain; a cell belongs to a shape iff its center does.  The same disk
pair doubles as the reference inactive-set geometry for preconditioner
studies, so its placement is fixed here once.
"""

from __future__ import annotations

import numpy as np

from .grid import CellField, InactiveMask

__all__ = ["GEOMETRIES", "cell_centers", "target_field", "disk_inactive_mask"]

# (center_x, center_y, radius)
TWO_DISKS = ((0.30, 0.30, 0.15), (0.65, 0.60, 0.20))

# Disk pair for inactive-set studies: same layout as the target disks but
# sized to be resolved already at n=16, where the coarse-cover band area
# starts halving per refinement.
MASK_DISKS = ((0.30, 0.30, 0.19), (0.64, 0.64, 0.24))

# (x0, x1, y0, y1)
TWO_RECTS = ((0.15, 0.45, 0.15, 0.40), (0.55, 0.85, 0.55, 0.80))

GEOMETRIES = ("two_disks", "two_rects", "checker")


def cell_centers(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Meshgrid arrays (X, Y) of cell centers, indexed [iy, ix]."""
    c = (np.arange(n) + 0.5) / n
    return np.meshgrid(c, c, indexing="xy")


def _disk_indicator(n: int, disks=TWO_DISKS) -> np.ndarray:
    x, y = cell_centers(n)
    inside = np.zeros((n, n), dtype=bool)
    for cx, cy, r in disks:
        inside |= (x - cx) ** 2 + (y - cy) ** 2 < r**2
    return inside


def target_field(geometry: str, n: int) -> CellField:
    """Cellwise 0/1 indicator field for the named geometry."""
    if geometry == "two_disks":
        inside = _disk_indicator(n)
    elif geometry == "two_rects":
        x, y = cell_centers(n)
        inside = np.zeros((n, n), dtype=bool)
        for x0, x1, y0, y1 in TWO_RECTS:
            inside |= (x0 < x) & (x < x1) & (y0 < y) & (y < y1)
    elif geometry == "checker":
        ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        inside = (ix + iy) % 2 == 0
    else:
        raise ValueError(f"unknown geometry {geometry!r}; pick one of {GEOMETRIES}")
    return CellField(n, inside.astype(float).reshape(-1))


def disk_inactive_mask(n: int) -> InactiveMask:
    """Inactive mask whose flagged region is the fixed study disk pair."""
    return InactiveMask(n, _disk_indicator(n, MASK_DISKS).reshape(-1))
