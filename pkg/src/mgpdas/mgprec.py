"""Multigrid preconditioner for the inactive Hessian on coarsened cell masks.

The coarse problems do not live on subspaces of the fine inactive space:
each coarser mask flags every parent cell with at least one flagged child,
so the flagged region grows downward.  One preconditioner application walks
the level ladder with three ingredients:

* a transfer that applies a coarse approximate inverse to the cell-averaged
  part of the residual and scales the complement by 1/beta,
* one Newton step X -> 2X - X H X per intermediate level, which squares the
  spectral error of the transferred operator and doubles the recursion, so
  the whole application has W-cycle structure,
* an (unpreconditioned) CG solve of the base-level inactive Hessian.

A state is built per inactive set; when the active-set loop changes the
partition, the masks are recomputed and handles rebound while the operator
backend and its caches are reused.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .grid import (
    CellField,
    GridHierarchy,
    InactiveMask,
    coarsen_inactive_set,
    inject,
    mask_project,
    restrict_avg,
)
from .hessian import HessianHandle
from .krylov import KrylovConfig, cg

__all__ = ["PrecState", "MultigridBaseSolveError", "build_prec", "apply_transfer", "apply_S", "apply_Z", "predict_cost"]

DENSE_BASE_GUARD = 4096


class MultigridBaseSolveError(RuntimeError):
    """Base-level CG inside the preconditioner failed to converge."""

    def __init__(self, level, n, report):
        self.level = level
        self.n = n
        self.report = report
        super().__init__(
            f"base-level solve at level {level} (n={n}) did not converge: "
            f"status={report.status}, rel_residual={report.rel_residual:.3e}"
        )


class PrecState:
    """Per-inactive-set preconditioner data over levels j0..j.

    Holds one mask and one masked Hessian handle per level, the base-solve
    configuration, and instrumentation counters (base solve count; per-level
    operator applications live on the handles).
    """

    def __init__(self, hierarchy, j0, j, beta, backend, masks, handles, base_config, base_solver):
        self.hierarchy = hierarchy
        self.j0 = j0
        self.j = j
        self.beta = beta
        self.backend = backend
        self.masks = masks          # level -> InactiveMask
        self.handles = handles      # level -> HessianHandle (masked)
        self.base_config = base_config
        self.base_solver = base_solver
        self.base_solves = 0
        self.base_iterations = 0
        self._base_dense = None
        if base_solver == "dense":
            self._base_dense = self._factor_base()

    def _factor_base(self):
        mask = self.masks[self.j0]
        idx = np.flatnonzero(mask.flags)
        if len(idx) > DENSE_BASE_GUARD:
            raise ValueError(
                f"dense base solver limited to {DENSE_BASE_GUARD} unknowns, got {len(idx)}"
            )
        handle = self.handles[self.j0]
        nn = mask.n * mask.n
        mat = np.empty((len(idx), len(idx)))
        for c, cell in enumerate(idx):
            e = np.zeros(nn)
            e[cell] = 1.0
            mat[:, c] = handle.apply_inactive(CellField(mask.n, e)).values[idx]
        handle.applications = 0  # materialization is setup, not solve work
        return idx, cho_factor(0.5 * (mat + mat.T))

    def applies_by_level(self) -> dict[int, int]:
        """Hessian applications recorded per resolution n."""
        return {self.masks[k].n: self.handles[k].applications for k in range(self.j0, self.j + 1)}

    def mask_at(self, k: int) -> InactiveMask:
        return self.masks[k]


def build_prec(
    hierarchy: GridHierarchy,
    fine_mask: InactiveMask,
    j0: int,
    beta: float,
    backend,
    base_rel_tol: float = 1e-10,
    base_max_iter: int = 5000,
    base_solver: str = "cg",
) -> PrecState:
    """Coarsen the inactive mask down to the base level and bind operators.

    The fine level is inferred from the mask resolution; ``j0`` must name a
    strictly coarser hierarchy level.  An empty fine mask is rejected: there
    is no subsystem to precondition and the caller should skip the solve.
    """
    if fine_mask.count == 0:
        raise ValueError("inactive mask is empty; nothing to precondition")
    j = hierarchy.level_of(fine_mask.n)
    if not 0 <= j0 < j:
        raise ValueError(f"base level {j0} must satisfy 0 <= j0 < {j}")
    if base_solver not in ("cg", "dense"):
        raise ValueError(f"base_solver must be 'cg' or 'dense', got {base_solver}")
    masks = {j: fine_mask}
    for k in range(j - 1, j0 - 1, -1):
        masks[k] = coarsen_inactive_set(masks[k + 1])
        assert masks[k].count > 0  # coarsening a nonempty mask keeps it nonempty
    handles = {
        k: HessianHandle(backend, beta, masks[k].n, masks[k]) for k in range(j0, j + 1)
    }
    base_config = KrylovConfig(rel_tol=base_rel_tol, max_iter=base_max_iter)
    return PrecState(hierarchy, j0, j, beta, backend, masks, handles, base_config, base_solver)


def _blend(state: PrecState, k: int, coarse_action, v: CellField, complement_scale: float) -> CellField:
    """Common two-level pattern: act on the coarse part, scale the rest.

    Splits v into its cell-average part on the coarse mask and the
    complement, applies ``coarse_action`` to the former, scales the latter,
    and projects the sum back onto the level-k mask.
    """
    coarse_mask = state.masks[k - 1]
    c = mask_project(restrict_avg(v), coarse_mask)
    acted = coarse_action(c)
    up = inject(acted).values + complement_scale * (v.values - inject(c).values)
    return mask_project(CellField(v.n, up), state.masks[k])


def apply_transfer(state: PrecState, k: int, coarse_action, v: CellField) -> CellField:
    """Lift a coarse approximate inverse to level k.

    Applies ``coarse_action`` to the coarse-mask projection of v and 1/beta
    to the complement; the result is projected onto the level-k mask.  This
    is the map that turns the level-(k-1) preconditioner into a level-k one.
    """
    if not state.j0 < k <= state.j:
        raise ValueError(f"transfer level {k} outside ({state.j0}, {state.j}]")
    if v.n != state.masks[k].n:
        raise ValueError(f"field resolution {v.n} does not match level {k}")
    return _blend(state, k, coarse_action, v, 1.0 / state.beta)


def apply_S(state: PrecState, k: int, v: CellField) -> CellField:
    """Forward companion of the two-grid preconditioner at level k.

    Applies the coarse inactive Hessian to the coarse part of v and beta to
    the complement.  When the coarse inactive space is nested in the fine
    one, this is the exact inverse of the two-grid preconditioner.
    """
    if not state.j0 < k <= state.j:
        raise ValueError(f"level {k} outside ({state.j0}, {state.j}]")
    return _blend(state, k, state.handles[k - 1].apply_inactive, v, state.beta)


def _base_solve(state: PrecState, v: CellField) -> CellField:
    state.base_solves += 1
    if state.base_solver == "dense":
        idx, factor = state._base_dense
        out = np.zeros_like(v.values)
        out[idx] = cho_solve(factor, v.values[idx])
        return CellField(v.n, out)
    x, report = cg(state.handles[state.j0].apply_inactive, v, state.base_config)
    state.base_iterations += report.iterations
    if not report.converged:
        raise MultigridBaseSolveError(state.j0, v.n, report)
    return x


def apply_Z(state: PrecState, k: int, v: CellField) -> CellField:
    """Apply the level-k multigrid preconditioner to a masked field.

    Base level: solve the inactive Hessian system by CG (or the dense
    factorization when configured).  Intermediate levels: transfer the
    coarser preconditioner up and take one Newton step toward the inverse,
    2 A v - A H A v, which costs two recursive descents and one level-k
    Hessian application (the W-cycle).  Finest level: transfer only.
    """
    if not state.j0 <= k <= state.j:
        raise ValueError(f"level {k} outside [{state.j0}, {state.j}]")
    if v.n != state.masks[k].n:
        raise ValueError(f"field resolution {v.n} does not match level {k}")
    if k == state.j0:
        return _base_solve(state, v)

    def descend(w: CellField) -> CellField:
        return apply_transfer(state, k, lambda c: apply_Z(state, k - 1, c), w)

    if k == state.j:
        return descend(v)
    t1 = descend(v)
    t2 = state.handles[k].apply_inactive(t1)
    t3 = descend(t2)
    return CellField(v.n, 2.0 * t1.values - t3.values)


def predict_cost(levels: int, alpha: float, p: float, F_cg: float, c_over_Cop: float) -> float:
    """Predicted cost of one preconditioner application relative to one
    fine-level Hessian application.

    ``levels`` counts the grids in use (two-grid = 2), ``alpha`` bounds the
    coarse-to-fine unknown ratio, ``p`` is the exponent in the Hessian
    application cost, ``F_cg`` the base CG iteration bound, and
    ``c_over_Cop`` the base-iteration/Hessian cost ratio.  Requires
    2 alpha^p < 1, otherwise the level sum diverges.
    """
    if levels < 2:
        raise ValueError("need at least two levels")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    q = 2.0 * alpha**p
    if q >= 1.0:
        raise ValueError(f"cost formula requires 2 alpha^p < 1, got {q}")
    base_term = (2.0 * alpha) ** (levels - 1) * F_cg * c_over_Cop / 2.0
    ladder_term = alpha**p / (1.0 - q) * (1.0 - q ** (levels - 2))
    return base_term + ladder_term
