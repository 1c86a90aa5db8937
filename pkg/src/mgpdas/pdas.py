"""Primal-dual active-set outer loop for box-constrained quadratic control.

Each sweep pins the current active cells to their bounds, solves the
inactive-Hessian subsystem for the free cells (CG, or CG preconditioned by
the coarsened-mask multigrid operator), recovers the multiplier on the
active cells, and re-estimates the partition.  The loop stops when the
partition reproduces itself and the inner solve converged; at that point the
iterate satisfies the first-order conditions up to the linear tolerance.
Boundary cases in the set update send cells to the active sets, so the
stationary partition is unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ActivePartition, CellField, GridHierarchy, inject, l2_norm
from .hessian import HessianHandle, recover_multiplier, subsystem_rhs
from .krylov import KrylovConfig, cg, pcg
from .mgprec import apply_Z, build_prec

__all__ = [
    "ProblemInstance",
    "SsnmState",
    "PdasError",
    "LinearSolveFailure",
    "OuterIterationLimit",
    "update_sets",
    "pdas_solve",
    "kkt_residual",
    "nested_solve",
]


class PdasError(RuntimeError):
    """Base class for active-set solver failures; carries partial history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class LinearSolveFailure(PdasError):
    pass


class OuterIterationLimit(PdasError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """One box-constrained problem min 1/2||Ku - y_d||^2 + beta/2 ||u||^2."""

    backend: object
    beta: float
    n: int
    a: CellField
    b: CellField
    f: CellField  # K* y_d, the fixed linear term of the optimality system

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError(f"regularization weight must be positive, got {self.beta}")
        for name in ("a", "b", "f"):
            fld = getattr(self, name)
            if fld.n != self.n:
                raise ValueError(f"{name} lives at n={fld.n}, expected {self.n}")
        if not np.all(self.a.values < self.b.values):
            raise ValueError("bounds must satisfy a < b in every cell")


@dataclass(eq=False)
class SsnmState:
    """Iterate of the active-set loop plus its per-step solve records."""

    u: CellField
    lam: CellField
    partition: ActivePartition
    outer_iters: int = 0
    converged: bool = False
    history: list[dict] = field(default_factory=list)

    def total_linear_iterations(self) -> int:
        return sum(row["lin_iterations"] for row in self.history)

    def avg_linear_iterations(self) -> float:
        solves = [row["lin_iterations"] for row in self.history if row["inactive"] > 0]
        return float(np.mean(solves)) if solves else 0.0

    def hessian_applies_by_level(self) -> dict[int, int]:
        total: dict[int, int] = {}
        for row in self.history:
            for n, count in row["hessian_applies"].items():
                total[n] = total.get(n, 0) + count
        return total


def update_sets(u: CellField, lam: CellField, a: CellField, b: CellField, beta: float) -> ActivePartition:
    """Partition the cells from the primal-dual pair.

    A cell joins the lower active set when lam + beta (a - u) >= 0, the
    upper one when lam + beta (b - u) <= 0, and stays inactive when both
    inequalities are strict in the complementary direction; since a < b the
    two active predicates never hold together.
    """
    cond_a = lam.values + beta * (a.values - u.values)
    cond_b = lam.values + beta * (b.values - u.values)
    lower = (cond_a >= 0.0) & (cond_b > 0.0)
    upper = (cond_a < 0.0) & (cond_b <= 0.0)
    inactive = (cond_a < 0.0) & (cond_b > 0.0)
    return ActivePartition(u.n, inactive, lower, upper)


def _bound_values(instance, partition) -> CellField:
    vals = np.where(
        partition.lower, instance.a.values, np.where(partition.upper, instance.b.values, 0.0)
    )
    return CellField(instance.n, vals)


def pdas_solve(
    instance: ProblemInstance,
    solver: str = "cg",
    hierarchy: GridHierarchy | None = None,
    j0: int | None = None,
    init: SsnmState | None = None,
    lin_tol: float = 1e-8,
    lin_max_iter: int = 1000,
    outer_max: int = 50,
    base_rel_tol: float = 1e-10,
    base_max_iter: int = 5000,
) -> SsnmState:
    """Run the active-set loop to a stationary partition.

    Parameters
    ----------
    solver : "cg" or "mgcg"
        Inner solver for the inactive subsystem; "mgcg" needs ``hierarchy``
        and a base level ``j0`` strictly coarser than the instance level.
    init : SsnmState, optional
        Warm start; its (u, lam) pair seeds the first partition.  The cold
        start clamps zero into the bounds with a zero multiplier.

    Raises
    ------
    LinearSolveFailure
        An inner solve stopped without reaching the tolerance.
    OuterIterationLimit
        No stationary partition within ``outer_max`` sweeps.
    """
    if solver not in ("cg", "mgcg"):
        raise ValueError(f"solver must be 'cg' or 'mgcg', got {solver}")
    if solver == "mgcg":
        if hierarchy is None or j0 is None:
            raise ValueError("mgcg needs a hierarchy and a base level j0")
        if hierarchy.level_of(instance.n) <= j0:
            raise ValueError("mgcg base level must be strictly coarser than the instance")

    n = instance.n
    full_handle = HessianHandle(instance.backend, instance.beta, n)
    if init is None:
        # Interior start: strictly inside the box with a zero multiplier, so
        # the first sweep solves the unconstrained problem.  Starting on a
        # bound would classify those cells active and can lock the loop into
        # a two-cycle when beta is small against ||K*K||.
        u = CellField(n, 0.5 * (instance.a.values + instance.b.values))
        lam = CellField.zeros(n)
    else:
        u, lam = init.u, init.lam
    partition = update_sets(u, lam, instance.a, instance.b, instance.beta)

    config = KrylovConfig(rel_tol=lin_tol, max_iter=lin_max_iter)
    history: list[dict] = []
    for outer in range(1, outer_max + 1):
        u_active = _bound_values(instance, partition)
        applies_before = full_handle.applications
        prec_state = None
        if partition.inactive.any():
            masked = HessianHandle(
                instance.backend, instance.beta, n, partition.inactive_mask
            )
            rhs = subsystem_rhs(full_handle, instance.f, u_active, partition)
            if solver == "cg":
                u_inactive, report = cg(masked.apply_inactive, rhs, config)
            else:
                prec_state = build_prec(
                    hierarchy,
                    partition.inactive_mask,
                    j0,
                    instance.beta,
                    instance.backend,
                    base_rel_tol=base_rel_tol,
                    base_max_iter=base_max_iter,
                )
                j_fine = prec_state.j
                u_inactive, report = pcg(
                    masked.apply_inactive,
                    lambda r: apply_Z(prec_state, j_fine, r),
                    rhs,
                    config,
                )
            fine_applies = masked.applications
        else:
            u_inactive = CellField.zeros(n)
            report = None
            fine_applies = 0

        u = CellField(n, u_active.values + u_inactive.values)
        lam = recover_multiplier(full_handle, u, instance.f, partition)
        new_partition = update_sets(u, lam, instance.a, instance.b, instance.beta)

        applies = {n: fine_applies + full_handle.applications - applies_before}
        if prec_state is not None:
            for level_n, count in prec_state.applies_by_level().items():
                applies[level_n] = applies.get(level_n, 0) + count
        ni, nlo, nup = partition.counts()
        history.append(
            {
                "outer": outer,
                "inactive": ni,
                "lower": nlo,
                "upper": nup,
                "lin_iterations": report.iterations if report else 0,
                "lin_status": report.status if report else "skipped",
                "lin_residual": report.rel_residual if report else 0.0,
                "hessian_applies": applies,
                "base_solves": prec_state.base_solves if prec_state else 0,
            }
        )
        if report is not None and not report.converged:
            raise LinearSolveFailure(
                f"inner {solver} solve failed at outer step {outer}: "
                f"status={report.status}, rel_residual={report.rel_residual:.3e}",
                history,
            )
        if new_partition.same_as(partition):
            return SsnmState(u, lam, new_partition, outer, True, history)
        partition = new_partition
    raise OuterIterationLimit(
        f"no stationary partition within {outer_max} outer iterations", history
    )


def kkt_residual(state: SsnmState, instance: ProblemInstance) -> float:
    """Max of the optimality-system residual norms at the iterate.

    First block: (K*K + beta I) u - lam - f.  Second block: the
    complementarity reformulation lam - max(0, g + beta a) - min(0, g + beta b)
    with g = K*K u - f.  Both are measured in the cellwise L2 norm.
    """
    g = instance.backend.apply_KtK(state.u).values - instance.f.values
    r1 = g + instance.beta * state.u.values - state.lam.values
    comp = (
        state.lam.values
        - np.maximum(0.0, g + instance.beta * instance.a.values)
        - np.minimum(0.0, g + instance.beta * instance.b.values)
    )
    n = instance.n
    return max(l2_norm(CellField(n, r1)), l2_norm(CellField(n, comp)))


def nested_solve(
    instances,
    solver: str = "cg",
    hierarchy: GridHierarchy | None = None,
    j0: int | None = None,
    **solve_kwargs,
) -> list[SsnmState]:
    """Solve a coarse-to-fine family, warm starting each level from the last.

    The coarser solution and multiplier are injected into the next level and
    the initial partition is re-estimated from the injected pair.  Levels at
    or below the preconditioner base are solved with plain CG.
    """
    states: list[SsnmState] = []
    prev: SsnmState | None = None
    for instance in sorted(instances, key=lambda inst: inst.n):
        init = None
        if prev is not None:
            u0 = prev.u
            lam0 = prev.lam
            while u0.n < instance.n:
                u0 = inject(u0)
                lam0 = inject(lam0)
            init = SsnmState(u0, lam0, prev.partition)
        level_solver = solver
        if solver == "mgcg" and hierarchy is not None and j0 is not None:
            if hierarchy.level_of(instance.n) <= j0:
                level_solver = "cg"
        states.append(
            pdas_solve(
                instance,
                solver=level_solver,
                hierarchy=hierarchy,
                j0=j0,
                init=init,
                **solve_kwargs,
            )
        )
        prev = states[-1]
    return states
