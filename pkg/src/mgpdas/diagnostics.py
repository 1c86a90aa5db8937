"""Dense desk-scale diagnostics: materialization, spectral distance, studies.

Everything here exists to verify operator identities and approximation rates
on problems small enough to materialize.  The spectral distance between SPD
operators A and B is the largest |log| of a generalized Rayleigh quotient
<Au,u>/<Bu,u>; a distance near zero certifies spectral equivalence with
constants near one, which is what makes a preconditioner good.  Eigenvalues
are computed with cyclic Jacobi rotations: dependency-free, deterministic,
and accurate to a fixed off-diagonal target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .grid import CellField, InactiveMask, build_hierarchy, coarsen_inactive_set, domain_measure, numerical_boundary_measure
from .hessian import HessianHandle
from .mgprec import apply_S, apply_Z, build_prec

__all__ = [
    "DenseOperator",
    "materialize",
    "symmetric_eigenvalues",
    "spectral_distance",
    "two_grid_rate_study",
    "report_tests",
    "DENSE_GUARD",
]

DENSE_GUARD = 4096


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Dense matrix of a masked linear map plus its basis bookkeeping."""

    matrix: np.ndarray
    basis: np.ndarray  # flagged cell indices defining the subspace ordering
    n: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def symmetry_gap(self) -> float:
        a = self.matrix
        na = np.linalg.norm(a)
        if na == 0.0:
            return 0.0
        return float(np.linalg.norm(a - a.T)) / na


def materialize(op, mask: InactiveMask) -> DenseOperator:
    """Apply ``op`` to every masked unit basis field and collect the columns."""
    idx = np.flatnonzero(mask.flags)
    m = len(idx)
    if m > DENSE_GUARD:
        raise ValueError(f"masked dimension {m} exceeds the dense guard {DENSE_GUARD}")
    nn = mask.n * mask.n
    mat = np.empty((m, m))
    for c, cell in enumerate(idx):
        e = np.zeros(nn)
        e[cell] = 1.0
        mat[:, c] = op(CellField(mask.n, e)).values[idx]
    return DenseOperator(mat, idx, mask.n)


def symmetric_eigenvalues(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps row pairs until the off-diagonal Frobenius mass drops below
    ``tol`` times the matrix norm.  Returns the eigenvalues in ascending
    order.
    """
    a = np.array(a, dtype=float)
    m = a.shape[0]
    if a.shape != (m, m):
        raise ValueError(f"expected a square matrix, got {a.shape}")
    if m == 1:
        return a[0].copy()
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(m)
    skip = tol * norm / (m * m)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.linalg.norm(a) ** 2 - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * norm:
            break
        for p in range(m - 1):
            row = a[p]
            for q in range(p + 1, m):
                apq = row[q]
                if abs(apq) <= skip:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) if theta != 0 else 1.0
                t = t / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[p].copy()
                aq = a[q].copy()
                a[p] = c * ap - s * aq
                a[q] = s * ap + c * aq
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                row = a[p]
    return np.sort(np.diag(a))


def _validate_spd(mat: np.ndarray, label: str, sym_tol: float):
    norm = np.linalg.norm(mat)
    if norm == 0.0 or np.linalg.norm(mat - mat.T) > sym_tol * norm:
        raise ValueError(f"{label} is not symmetric to tolerance {sym_tol}")
    try:
        return np.linalg.cholesky(0.5 * (mat + mat.T))
    except np.linalg.LinAlgError:
        raise ValueError(f"{label} is not positive definite") from None


def spectral_distance(a, b, sym_tol: float = 1e-8) -> float:
    """sup over directions of |log(<Au,u>/<Bu,u>)| for SPD operators A, B.

    Reduces the pencil with a Cholesky factor of B and measures the extreme
    eigenvalues of the congruent symmetric matrix by Jacobi rotations.
    """
    amat = a.matrix if isinstance(a, DenseOperator) else np.asarray(a, dtype=float)
    bmat = b.matrix if isinstance(b, DenseOperator) else np.asarray(b, dtype=float)
    if amat.shape != bmat.shape:
        raise ValueError(f"operator shapes differ: {amat.shape} vs {bmat.shape}")
    _validate_spd(amat, "first operator", sym_tol)
    lfac = _validate_spd(bmat, "second operator", sym_tol)
    y = solve_triangular(lfac, 0.5 * (amat + amat.T), lower=True)
    c = solve_triangular(lfac, y.T, lower=True)
    eigs = symmetric_eigenvalues(0.5 * (c + c.T))
    if eigs[0] <= 0.0:
        raise ValueError("pencil reduction produced a nonpositive eigenvalue")
    return float(np.max(np.abs(np.log(eigs))))


def two_grid_rate_study(backend, beta: float, ns, mask_factory) -> list[dict]:
    """Spectral distance of the two-grid preconditioner to the exact inverse.

    For each resolution n: build the mask from ``mask_factory``, materialize
    the inactive Hessian and the two-grid preconditioner (exact dense coarse
    inverse), and report the distance together with its theoretical driver
    h + mu(coarse band).  Dimensions must stay inside the dense guard.
    """
    rows = []
    for n in sorted(int(x) for x in ns):
        mask = mask_factory(n)
        hier = build_hierarchy(n // 2, 2)
        state = build_prec(hier, mask, 0, beta, backend, base_solver="dense")
        handle = HessianHandle(backend, beta, n, mask)
        hmat = materialize(handle.apply_inactive, mask)
        prec = materialize(lambda v: apply_Z(state, 1, v), mask)
        hinv = cho_solve(cho_factor(0.5 * (hmat.matrix + hmat.matrix.T)), np.eye(hmat.dim))
        coarse = coarsen_inactive_set(mask)
        mu = numerical_boundary_measure(mask, coarse)
        rows.append(
            {
                "n": n,
                "dim": hmat.dim,
                "h": 1.0 / n,
                "mu_boundary": mu,
                "driver": 1.0 / n + mu,
                "distance": spectral_distance(prec, hinv),
                "inactive_measure": domain_measure(mask),
            }
        )
    return rows


def materialize_two_grid_pair(backend, beta: float, mask: InactiveMask):
    """Dense two-grid preconditioner and its forward companion on one mask."""
    hier = build_hierarchy(mask.n // 2, 2)
    state = build_prec(hier, mask, 0, beta, backend, base_solver="dense")
    m_op = materialize(lambda v: apply_Z(state, 1, v), mask)
    s_op = materialize(lambda v: apply_S(state, 1, v), mask)
    return m_op, s_op


def report_tests(counts, kind: str = "weak", slack: float = 1.0) -> dict:
    """Verdict on an iteration-count sequence: non-increasing within slack.

    ``counts`` holds average linear iterations per outer step, ordered by
    increasing resolution (weak test) or by increasing level count at a
    fixed base level (strong test, where a two-to-three grid bump is known
    to precede the asymptotic decrease).  Any step that grows by more than
    ``slack`` is flagged.
    """
    if kind not in ("weak", "strong"):
        raise ValueError(f"kind must be 'weak' or 'strong', got {kind}")
    seq = [float(c) for c in counts]
    if len(seq) < 2:
        raise ValueError("need at least two data points")
    violations = [
        (i, seq[i], seq[i + 1])
        for i in range(len(seq) - 1)
        if seq[i + 1] > seq[i] + slack
    ]
    return {
        "kind": kind,
        "passed": not violations,
        "violations": violations,
        "counts": seq,
    }
