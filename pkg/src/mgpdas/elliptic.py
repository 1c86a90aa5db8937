"""Matrix-free discrete solution operator for -Laplace(y) = u on (0,1)^2.

The state is discretized with continuous bilinear (Q1) elements on the nodes
of the same uniform n x n grid that carries the piecewise-constant control,
with homogeneous Dirichlet values on the boundary.  On this grid the
stiffness and mass matrices reduce to constant 3x3 stencils, so the forward
map K: u -> y, its adjoint, and the normal-equations composition K*K are all
applied without ever assembling a matrix at production sizes.  Linear systems
with the stiffness operator are solved directly below ``n_direct`` and with a
V(2,2) geometric multigrid (red-black Gauss-Seidel smoothing, bilinear
transfer) above it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import correlate
from scipy.sparse.linalg import splu

from .grid import CellField

__all__ = ["NodalField", "EllipticBackend", "PoissonSolveError", "nodal_l2"]

# Q1 stencils on a uniform square grid; the stiffness has no h factor in 2D
# and the mass stencil carries h^2 separately.
_STIFFNESS_STENCIL = np.array(
    [[-1.0, -1.0, -1.0], [-1.0, 8.0, -1.0], [-1.0, -1.0, -1.0]]
) / 3.0
_MASS_STENCIL = np.array([[1.0, 4.0, 1.0], [4.0, 16.0, 4.0], [1.0, 4.0, 1.0]]) / 36.0
_DIAG = 8.0 / 3.0


class PoissonSolveError(RuntimeError):
    """Inner multigrid failed to reach the requested residual reduction."""

    def __init__(self, n, cycles, achieved, target):
        self.n = n
        self.cycles = cycles
        self.achieved = achieved
        self.target = target
        super().__init__(
            f"Poisson multigrid at n={n} stalled after {cycles} cycles: "
            f"relative residual {achieved:.3e} > {target:.3e}"
        )


@dataclass(frozen=True, eq=False)
class NodalField:
    """State values at the (n-1)^2 interior Q1 nodes, indexed [jy, jx].

    Node (jx, jy) sits at ((jx+1) h, (jy+1) h); boundary values are
    implicitly zero.
    """

    n: int
    values: np.ndarray

    def __post_init__(self):
        m = self.n - 1
        v = np.asarray(self.values, dtype=float)
        if v.shape != (m, m):
            raise ValueError(f"expected ({m}, {m}) nodal values, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def h(self) -> float:
        return 1.0 / self.n


def nodal_l2(y: NodalField) -> float:
    """Discrete L2 norm sqrt(h^2 sum y_i^2) over the interior nodes."""
    return float(np.linalg.norm(y.values)) / y.n


def _apply_stiffness(y: np.ndarray) -> np.ndarray:
    return correlate(y, _STIFFNESS_STENCIL, mode="constant", cval=0.0)


def _apply_mass(y: np.ndarray, h: float) -> np.ndarray:
    return h * h * correlate(y, _MASS_STENCIL, mode="constant", cval=0.0)


def _restrict_nodal(r: np.ndarray) -> np.ndarray:
    """Transpose of bilinear interpolation, interior nodes m=n-1 -> n/2-1."""
    return (
        r[1::2, 1::2]
        + 0.5 * (r[:-2:2, 1::2] + r[2::2, 1::2] + r[1::2, :-2:2] + r[1::2, 2::2])
        + 0.25 * (r[:-2:2, :-2:2] + r[:-2:2, 2::2] + r[2::2, :-2:2] + r[2::2, 2::2])
    )


def _prolong_nodal(c: np.ndarray, n: int) -> np.ndarray:
    """Bilinear interpolation onto the n-grid interior nodes (zero boundary)."""
    mc = c.shape[0]
    cp = np.zeros((mc + 2, mc + 2))
    cp[1:-1, 1:-1] = c
    fp = np.zeros((n + 1, n + 1))
    fp[::2, ::2] = cp
    fp[1::2, ::2] = 0.5 * (cp[:-1, :] + cp[1:, :])
    fp[:, 1::2] = 0.5 * (fp[:, :-2:2] + fp[:, 2::2])
    return fp[1:-1, 1:-1]


def _assemble_stiffness(n: int) -> sp.csc_matrix:
    """Sparse Q1 stiffness on the interior nodes (kron of 1D FE factors)."""
    m = n - 1
    h = 1.0 / n
    k1 = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m)) / h
    m1 = sp.diags([1.0, 4.0, 1.0], [-1, 0, 1], shape=(m, m)) * (h / 6.0)
    return (sp.kron(k1, m1) + sp.kron(m1, k1)).tocsc()


class EllipticBackend:
    """Poisson solution operator family over any resolution n >= 2.

    Parameters
    ----------
    rel_tol : float
        Relative residual target for the inner multigrid solves.  Kept well
        below the outer Krylov tolerance so the composed normal operator
        stays numerically symmetric.
    max_cycles : int
        V-cycle budget before a solve is reported as failed.
    smooth_sweeps : (int, int)
        Pre- and post-smoothing sweeps per cycle.
    n_direct : int
        Resolutions up to this size use a cached sparse direct factorization;
        it is also the coarse level of the V-cycle ladder.
    """

    kind = "elliptic"

    def __init__(self, rel_tol=1e-10, max_cycles=60, smooth_sweeps=(2, 2), n_direct=64):
        if not 0.0 < rel_tol <= 1e-4:
            raise ValueError(f"inner tolerance must be in (0, 1e-4], got {rel_tol}")
        if n_direct < 2:
            raise ValueError("n_direct must be at least 2")
        self.rel_tol = float(rel_tol)
        self.max_cycles = int(max_cycles)
        self.smooth_sweeps = tuple(smooth_sweeps)
        self.n_direct = int(n_direct)
        self._lu = {}
        self._red = {}

    # -- direct and smoothing building blocks ------------------------------

    def _direct(self, n):
        if n not in self._lu:
            self._lu[n] = splu(_assemble_stiffness(n))
        return self._lu[n]

    def _direct_solve(self, rhs: np.ndarray, n: int) -> np.ndarray:
        m = n - 1
        return self._direct(n).solve(rhs.reshape(-1)).reshape(m, m)

    def _red_mask(self, n):
        if n not in self._red:
            m = n - 1
            jx, jy = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
            self._red[n] = ((jx + jy) % 2 == 0)
        return self._red[n]

    def _smooth(self, u, b, n, sweeps):
        red = self._red_mask(n)
        for _ in range(sweeps):
            for color in (red, ~red):
                r = b - _apply_stiffness(u)
                u[color] += r[color] / _DIAG
        return u

    def _vcycle(self, u, b, n):
        if n <= self.n_direct or n % 2 != 0:
            return self._direct_solve(b, n)
        pre, post = self.smooth_sweeps
        u = self._smooth(u, b, n, pre)
        r = b - _apply_stiffness(u)
        rc = _restrict_nodal(r)
        ec = self._vcycle(np.zeros_like(rc), rc, n // 2)
        u += _prolong_nodal(ec, n)
        return self._smooth(u, b, n, post)

    # -- public operations --------------------------------------------------

    def poisson_solve(self, rhs: np.ndarray, n: int, tol: float | None = None) -> NodalField:
        """Solve the Q1 stiffness system A y = rhs on the interior nodes.

        Direct factorization for n <= n_direct, otherwise V(2,2) cycles until
        ||A y - rhs|| <= tol ||rhs||.
        """
        tol = self.rel_tol if tol is None else tol
        m = n - 1
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (m, m):
            raise ValueError(f"rhs shape {rhs.shape} does not match n={n}")
        if not np.all(np.isfinite(rhs)):
            raise ValueError("rhs must be finite")
        bnorm = np.linalg.norm(rhs)
        if bnorm == 0.0:
            return NodalField(n, np.zeros((m, m)))
        if n <= self.n_direct or n % 2 != 0:
            return NodalField(n, self._direct_solve(rhs, n))
        y = np.zeros((m, m))
        for cycle in range(1, self.max_cycles + 1):
            y = self._vcycle(y, rhs, n)
            res = np.linalg.norm(rhs - _apply_stiffness(y)) / bnorm
            if res <= tol:
                return NodalField(n, y)
        raise PoissonSolveError(n, self.max_cycles, res, tol)

    def apply_load(self, u: CellField) -> np.ndarray:
        """Right-hand side B u: each cell sends h^2/4 to its 4 corner nodes."""
        grid = u.as_grid()
        s = grid[:-1, :-1] + grid[:-1, 1:] + grid[1:, :-1] + grid[1:, 1:]
        return (u.h * u.h / 4.0) * s

    def _load_transpose(self, y: np.ndarray, n: int) -> np.ndarray:
        yp = np.zeros((n + 1, n + 1))
        yp[1:-1, 1:-1] = y
        s = yp[:-1, :-1] + yp[:-1, 1:] + yp[1:, :-1] + yp[1:, 1:]
        h = 1.0 / n
        return (h * h / 4.0) * s

    def apply_K(self, u: CellField) -> NodalField:
        """State y = K u solving the discrete Poisson problem with load u."""
        return self.poisson_solve(self.apply_load(u), u.n)

    def apply_Kadj(self, y: NodalField) -> CellField:
        """L2 adjoint K* y back onto the cells (mass, solve, scaled load-transpose)."""
        t = _apply_mass(y.values, y.h)
        y2 = self.poisson_solve(t, y.n)
        cells = self._load_transpose(y2.values, y.n) / (y.h * y.h)
        return CellField.from_grid(cells)

    def apply_KtK(self, u: CellField) -> CellField:
        """Normal operator K*K u; two inner Poisson solves per application."""
        return self.apply_Kadj(self.apply_K(u))
