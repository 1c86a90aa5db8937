"""Shared oracle helpers for the test suite (independent of the solver paths)."""

import numpy as np

from mgpdas.grid import CellField


class ZeroBackend:
    """Operator stub whose forward map is identically zero."""

    kind = "zero"

    def apply_K(self, u):
        return CellField.zeros(u.n)

    def apply_Kadj(self, y):
        return CellField.zeros(y.n)

    def apply_KtK(self, u):
        return CellField.zeros(u.n)


def densify(op, n):
    """Materialize a linear map on full cell fields as an (n^2, n^2) matrix."""
    nn = n * n
    mat = np.empty((nn, nn))
    for j in range(nn):
        e = np.zeros(nn)
        e[j] = 1.0
        mat[:, j] = op(CellField(n, e)).values
    return mat


def densify_masked(op, mask):
    """Materialize a masked linear map on the flagged-cell coordinates."""
    idx = np.flatnonzero(mask.flags)
    m = len(idx)
    mat = np.empty((m, m))
    for c, j in enumerate(idx):
        e = np.zeros(mask.n * mask.n)
        e[j] = 1.0
        mat[:, c] = op(CellField(mask.n, e)).values[idx]
    return mat


def projected_gradient(apply_h, f, lo, hi, n, tol=1e-10, max_iter=200000):
    """Projected-gradient solve of min 1/2 <Hu,u> - <f,u> s.t. lo <= u <= hi.

    Plain fixed-step iteration with the step from a power estimate of ||H||;
    slow but independent of every Newton/active-set code path.
    """
    rng = np.random.default_rng(1234)
    z = rng.standard_normal(n * n)
    for _ in range(60):
        z /= np.linalg.norm(z)
        z = apply_h(CellField(n, z)).values
    step = 1.0 / (1.05 * np.linalg.norm(z))
    u = np.clip(np.zeros(n * n), lo, hi)
    for _ in range(max_iter):
        grad = apply_h(CellField(n, u)).values - f
        nxt = np.clip(u - step * grad, lo, hi)
        if np.max(np.abs(nxt - u)) <= tol:
            return nxt
        u = nxt
    raise RuntimeError("projected gradient did not reach the requested tolerance")
