"""Reduced Hessian K*K + beta*I and its restriction to the inactive cells.

The handle wraps an operator backend at one resolution, optionally restricted
to an inactive mask (a principal sub-operator in the cell basis).  Inputs to
the restricted application must already live on the mask; anything else is a
caller bug and is rejected rather than silently projected.  Each handle
counts its applications so cycle-structure and cost checks can audit solver
behavior.
"""

from __future__ import annotations

import numpy as np

from .grid import ActivePartition, CellField, InactiveMask, mask_project

__all__ = ["HessianHandle", "subsystem_rhs", "recover_multiplier"]


class HessianHandle:
    """Matrix-free application of K*K + beta*I at a fixed resolution.

    With ``mask`` set, the handle represents the principal sub-operator on
    the flagged cells: inputs must be supported on the mask and outputs are
    projected back onto it.
    """

    def __init__(self, backend, beta: float, n: int, mask: InactiveMask | None = None):
        if beta <= 0.0:
            raise ValueError(f"regularization weight must be positive, got {beta}")
        if mask is not None and mask.n != n:
            raise ValueError(f"mask level n={mask.n} does not match n={n}")
        self.backend = backend
        self.beta = float(beta)
        self.n = int(n)
        self.mask = mask
        self.applications = 0

    def clone(self) -> "HessianHandle":
        """Fresh handle on the same operator with a zeroed counter."""
        return HessianHandle(self.backend, self.beta, self.n, self.mask)

    def apply(self, u: CellField) -> CellField:
        """Full-space application (K*K + beta I) u."""
        if u.n != self.n:
            raise ValueError(f"field level n={u.n} does not match handle n={self.n}")
        self.applications += 1
        ktk = self.backend.apply_KtK(u)
        return CellField(u.n, ktk.values + self.beta * u.values)

    def apply_inactive(self, v: CellField) -> CellField:
        """Masked application; rejects inputs with mass off the mask."""
        if self.mask is None:
            raise ValueError("handle has no mask; use apply()")
        if v.n != self.n:
            raise ValueError(f"field level n={v.n} does not match handle n={self.n}")
        if np.any(v.values[~self.mask.flags] != 0.0):
            raise ValueError("input carries values outside the inactive mask")
        return mask_project(self.apply(v), self.mask)

    def __call__(self, v: CellField) -> CellField:
        return self.apply_inactive(v) if self.mask is not None else self.apply(v)


def subsystem_rhs(
    handle: HessianHandle, f: CellField, u_active: CellField, partition: ActivePartition
) -> CellField:
    """Right-hand side of the inactive subsystem: project f - H u_A onto I.

    ``u_active`` holds the bound values on the active cells and zero on the
    inactive ones, so one full Hessian application yields the coupling term.
    """
    if np.any(u_active.values[partition.inactive] != 0.0):
        raise ValueError("active-cell field carries values on inactive cells")
    hu = handle.apply(u_active)
    return mask_project(CellField(f.n, f.values - hu.values), partition.inactive_mask)


def recover_multiplier(
    handle: HessianHandle, u_full: CellField, f: CellField, partition: ActivePartition
) -> CellField:
    """Multiplier on the active cells: project H u - f onto A; zero elsewhere."""
    hu = handle.apply(u_full)
    lam = hu.values - f.values
    return CellField(f.n, np.where(partition.active, lam, 0.0))
