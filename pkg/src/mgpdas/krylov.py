"""Conjugate gradients over the piecewise-constant L2 inner product.

Both solvers take the operator (and preconditioner) as callables on cell
fields and keep all inner products in the h^2-weighted L2 pairing.  The
preconditioned variant converges on the true residual norm so its iteration
counts are directly comparable with the unpreconditioned ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import CellField

__all__ = ["KrylovConfig", "SolveReport", "cg", "pcg"]


@dataclass(frozen=True)
class KrylovConfig:
    rel_tol: float = 1e-8
    max_iter: int = 1000
    record_residuals: bool = False

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must be in (0, 1), got {self.rel_tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class SolveReport:
    """Outcome of one Krylov solve.

    ``status`` is "converged", "max_iter", "indefinite" (a direction with
    nonpositive curvature appeared), or "breakdown" (the preconditioned
    product <r, z> lost positivity).
    """

    iterations: int
    rel_residual: float
    status: str
    residuals: list[float] | None = field(default=None)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _inner(a: np.ndarray, b: np.ndarray, n: int) -> float:
    return float(np.dot(a, b)) / (n * n)


def cg(op, rhs: CellField, config: KrylovConfig = KrylovConfig()):
    """Conjugate gradients for an SPD operator on (masked) cell fields.

    Parameters
    ----------
    op : callable
        Symmetric positive definite map CellField -> CellField; for masked
        problems it must preserve the subspace.
    rhs : CellField
        Right-hand side in the same subspace.
    config : KrylovConfig
        Tolerance on ||r_k|| / ||r_0||, iteration cap, history switch.

    Returns
    -------
    (CellField, SolveReport)
    """
    return _cg_impl(op, None, rhs, config, flexible=False)


def pcg(op, prec, rhs: CellField, config: KrylovConfig = KrylovConfig(), flexible: bool = False):
    """Preconditioned conjugate gradients; stops on the true residual norm.

    ``prec`` must be an SPD linear map on the same subspace.  With
    ``flexible`` the direction update uses the Polak-Ribiere coupling, which
    tolerates a mildly nonstationary preconditioner.
    """
    return _cg_impl(op, prec, rhs, config, flexible=flexible)


def _cg_impl(op, prec, rhs, config, flexible):
    n = rhs.n
    x = np.zeros_like(rhs.values)
    r = rhs.values.copy()
    r0_norm = np.sqrt(_inner(r, r, n))
    history = [1.0] if config.record_residuals else None
    if r0_norm == 0.0:
        return CellField(n, x), SolveReport(0, 0.0, "converged", history)

    z = prec(CellField(n, r)).values if prec is not None else r
    p = z.copy()
    rz = _inner(r, z, n)
    if prec is not None and rz <= 0.0:
        return CellField(n, x), SolveReport(0, 1.0, "breakdown", history)

    rel = 1.0
    for k in range(1, config.max_iter + 1):
        ap = op(CellField(n, p)).values
        pap = _inner(p, ap, n)
        if pap <= 0.0:
            return CellField(n, x), SolveReport(k - 1, rel, "indefinite", history)
        alpha = rz / pap
        x += alpha * p
        r_old = r if flexible else None
        r = r - alpha * ap
        rel = np.sqrt(_inner(r, r, n)) / r0_norm
        if history is not None:
            history.append(rel)
        if rel <= config.rel_tol:
            return CellField(n, x), SolveReport(k, rel, "converged", history)
        z = prec(CellField(n, r)).values if prec is not None else r
        rz_next = _inner(r, z, n)
        if prec is not None and rz_next <= 0.0:
            return CellField(n, x), SolveReport(k, rel, "breakdown", history)
        if flexible:
            beta = (rz_next - _inner(r_old, z, n)) / rz
        else:
            beta = rz_next / rz
        p = z + beta * p
        rz = rz_next
    return CellField(n, x), SolveReport(config.max_iter, rel, "max_iter", history)
