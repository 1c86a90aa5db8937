"""Nested square-grid hierarchy, piecewise-constant cell fields, and masks.

The unit square (0,1)^2 is split into n x n equal cells; refining a level
doubles n, so every cell has exactly four children.  Fields are one value
per cell, stored row-major with the x-index fastest: flat index
``i = iy * n + ix`` and cell center ``((ix + 1/2) h, (iy + 1/2) h)`` with
``h = 1/n``.  All operations here are pure; values are never mutated after
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridHierarchy",
    "CellField",
    "InactiveMask",
    "ActivePartition",
    "build_hierarchy",
    "l2_inner",
    "l2_norm",
    "restrict_avg",
    "inject",
    "mask_project",
    "coarsen_inactive_set",
    "domain_measure",
    "numerical_boundary_measure",
]


@dataclass(frozen=True)
class GridHierarchy:
    """Levels j = 0..levels-1 with n_j = n0 * 2^j cells per side."""

    n0: int
    levels: int

    def __post_init__(self):
        if self.n0 < 2:
            raise ValueError(f"base resolution must be >= 2, got {self.n0}")
        if self.levels < 1:
            raise ValueError(f"need at least one level, got {self.levels}")

    @property
    def ns(self) -> tuple[int, ...]:
        return tuple(self.n0 * 2**j for j in range(self.levels))

    def n_at(self, j: int) -> int:
        if not 0 <= j < self.levels:
            raise ValueError(f"level {j} outside hierarchy 0..{self.levels - 1}")
        return self.n0 * 2**j

    def h_at(self, j: int) -> float:
        return 1.0 / self.n_at(j)

    def ncells(self, j: int) -> int:
        return self.n_at(j) ** 2

    def level_of(self, n: int) -> int:
        """Level index whose resolution is n; error if n is not in the hierarchy."""
        q, j = n, 0
        while q > self.n0 and q % 2 == 0:
            q //= 2
            j += 1
        if q != self.n0 or j >= self.levels:
            raise ValueError(f"resolution {n} is not a level of {self}")
        return j


def build_hierarchy(n0: int, levels: int) -> GridHierarchy:
    """Uniform nested hierarchy with n_j = n0 * 2^j, j = 0..levels-1."""
    return GridHierarchy(n0, levels)


@dataclass(frozen=True, eq=False)
class CellField:
    """One real value per cell of an n x n grid, flat row-major (x fastest)."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.n * self.n,):
            raise ValueError(
                f"expected {self.n * self.n} values for n={self.n}, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("cell values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @classmethod
    def zeros(cls, n: int) -> "CellField":
        return cls(n, np.zeros(n * n))

    @classmethod
    def constant(cls, n: int, value: float) -> "CellField":
        return cls(n, np.full(n * n, float(value)))

    @classmethod
    def from_grid(cls, grid: np.ndarray) -> "CellField":
        """Build from an (n, n) array indexed [iy, ix]."""
        n = grid.shape[0]
        if grid.shape != (n, n):
            raise ValueError(f"expected a square grid, got {grid.shape}")
        return cls(n, np.asarray(grid, dtype=float).reshape(-1))

    def as_grid(self) -> np.ndarray:
        """(n, n) view indexed [iy, ix]."""
        return self.values.reshape(self.n, self.n)


@dataclass(frozen=True, eq=False)
class InactiveMask:
    """Boolean flag per cell; True marks the cell as inactive."""

    n: int
    flags: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.flags, dtype=bool)
        if f.shape != (self.n * self.n,):
            raise ValueError(
                f"expected {self.n * self.n} flags for n={self.n}, got shape {f.shape}"
            )
        object.__setattr__(self, "flags", f)

    @classmethod
    def full(cls, n: int) -> "InactiveMask":
        return cls(n, np.ones(n * n, dtype=bool))

    @classmethod
    def empty(cls, n: int) -> "InactiveMask":
        return cls(n, np.zeros(n * n, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def as_grid(self) -> np.ndarray:
        return self.flags.reshape(self.n, self.n)

    def same_as(self, other: "InactiveMask") -> bool:
        return self.n == other.n and bool(np.array_equal(self.flags, other.flags))


@dataclass(frozen=True, eq=False)
class ActivePartition:
    """Disjoint cell masks: inactive, lower-bound active, upper-bound active."""

    n: int
    inactive: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        nn = self.n * self.n
        for name in ("inactive", "lower", "upper"):
            m = np.asarray(getattr(self, name), dtype=bool)
            if m.shape != (nn,):
                raise ValueError(f"{name} mask has shape {m.shape}, expected ({nn},)")
            object.__setattr__(self, name, m)
        covered = self.inactive.astype(int) + self.lower.astype(int) + self.upper.astype(int)
        if not np.all(covered == 1):
            raise ValueError("masks must partition the cells exactly")

    @property
    def inactive_mask(self) -> InactiveMask:
        return InactiveMask(self.n, self.inactive)

    @property
    def active(self) -> np.ndarray:
        return self.lower | self.upper

    def counts(self) -> tuple[int, int, int]:
        return int(self.inactive.sum()), int(self.lower.sum()), int(self.upper.sum())

    def same_as(self, other: "ActivePartition") -> bool:
        return (
            self.n == other.n
            and bool(np.array_equal(self.inactive, other.inactive))
            and bool(np.array_equal(self.lower, other.lower))
            and bool(np.array_equal(self.upper, other.upper))
        )


def _check_same_level(a, b):
    if a.n != b.n:
        raise ValueError(f"level mismatch: n={a.n} vs n={b.n}")


def l2_inner(u: CellField, v: CellField) -> float:
    """L2(0,1)^2 inner product of piecewise-constant fields: h^2 sum(u_i v_i)."""
    _check_same_level(u, v)
    return float(np.dot(u.values, v.values)) / (u.n * u.n)


def l2_norm(u: CellField) -> float:
    return float(np.linalg.norm(u.values)) / u.n


def restrict_avg(u: CellField) -> CellField:
    """L2 projection onto the next-coarser level: average of the 4 children."""
    if u.n % 2 != 0 or u.n < 2:
        raise ValueError(f"cannot restrict a level with n={u.n}")
    nc = u.n // 2
    blocks = u.as_grid().reshape(nc, 2, nc, 2)
    return CellField(nc, blocks.mean(axis=(1, 3)).reshape(-1))


def inject(u: CellField) -> CellField:
    """Natural embedding into the next-finer level: children copy the parent."""
    fine = u.as_grid().repeat(2, axis=0).repeat(2, axis=1)
    return CellField(2 * u.n, fine.reshape(-1))


def mask_project(u: CellField, m: InactiveMask) -> CellField:
    """Zero the entries outside the mask (orthogonal projection onto its span)."""
    _check_same_level(u, m)
    return CellField(u.n, np.where(m.flags, u.values, 0.0))


def coarsen_inactive_set(m: InactiveMask) -> InactiveMask:
    """Coarse cell is flagged iff any of its 4 children is flagged.

    This picks every coarse cell whose support overlaps the fine flagged
    region with positive area, so the flagged region can only grow when
    coarsening: the fine region is contained in the coarse one.
    """
    if m.n % 2 != 0 or m.n < 2:
        raise ValueError(f"cannot coarsen a mask with n={m.n}")
    nc = m.n // 2
    blocks = m.as_grid().reshape(nc, 2, nc, 2)
    return InactiveMask(nc, blocks.any(axis=(1, 3)).reshape(-1))


def domain_measure(m: InactiveMask) -> float:
    """Area covered by the flagged cells."""
    return m.count / (m.n * m.n)


def numerical_boundary_measure(fine: InactiveMask, coarse: InactiveMask) -> float:
    """Area covered by flagged coarse cells but unflagged at the fine level.

    `coarse` must be the coarsening of `fine`; the result is the area of the
    band the coarse flagged region adds around the fine one.
    """
    if coarse.n * 2 != fine.n:
        raise ValueError(f"inconsistent levels: fine n={fine.n}, coarse n={coarse.n}")
    covered = coarse.as_grid().repeat(2, axis=0).repeat(2, axis=1).reshape(-1)
    band = covered & ~fine.flags
    return int(band.sum()) / (fine.n * fine.n)
