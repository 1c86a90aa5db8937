"""Experiment harness: problem setup, sweeps, and file output.

A sweep walks (beta, solver) combinations through a coarse-to-fine chain of
resolutions, warm starting each level from the previous one, and emits one
CSV row per requested resolution with iteration counts and per-level
operator-application tallies.  Solver failures are recorded in-row and the
sweep continues.  Field dumps support a plain-text PGM (with min/max header
for exact inversion) and a full-precision CSV grid.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np

from .blur import GaussianBlurBackend
from .elliptic import EllipticBackend
from .grid import CellField, build_hierarchy, inject
from .pdas import PdasError, ProblemInstance, SsnmState, pdas_solve, update_sets
from .targets import GEOMETRIES, target_field

__all__ = [
    "ExperimentConfig",
    "parse_config_file",
    "make_backend",
    "make_instance",
    "run_sweep",
    "write_rows_csv",
    "dump_field",
    "load_field_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = [
    "problem",
    "beta",
    "n",
    "solver",
    "j0",
    "levels",
    "ssnm_iters",
    "avg_lin_iters",
    "total_lin_iters",
    "hessian_applies_by_level",
    "wall_seconds",
    "status",
]


@dataclass
class ExperimentConfig:
    problem: str = "elliptic"
    betas: tuple = (1e-4,)
    ns: tuple = (64,)
    solvers: tuple = ("cg",)
    j0: int = 0
    n_base: int | None = None  # hierarchy base resolution; defaults to min(ns)
    bound_lo: float = 0.0
    bound_hi: float = 1.0
    blur_w: float = 0.1
    blur_sigma: float | None = None  # defaults to blur_w / 3
    boundary_mode: str = "restricted"
    geometry: str = "two_disks"
    tol: float = 1e-8
    lin_max_iter: int = 1000
    outer_max: int = 50
    nested: bool = True
    dump_fields: bool = False
    figures: bool = True
    out_dir: str = "."
    seed: int = 0

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        self.ns = tuple(sorted(int(n) for n in self.ns))
        self.solvers = tuple(self.solvers)
        if self.problem not in ("elliptic", "deblur"):
            raise ValueError(f"problem must be elliptic or deblur, got {self.problem!r}")
        if not self.ns:
            raise ValueError("need at least one resolution")
        for s in self.solvers:
            if s not in ("cg", "mgcg"):
                raise ValueError(f"solver must be cg or mgcg, got {s!r}")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}")
        if self.bound_lo >= self.bound_hi:
            raise ValueError("bounds must satisfy lo < hi")
        base = self.n_base if self.n_base is not None else min(self.ns)
        for n in self.ns:
            q = n // base
            if base * q != n or q & (q - 1):
                raise ValueError(f"resolution {n} is not base {base} times a power of two")
        levels = max(n // base for n in self.ns).bit_length()
        if not 0 <= self.j0 < levels:
            raise ValueError(f"j0={self.j0} outside the hierarchy levels 0..{levels - 1}")

    @property
    def sigma(self) -> float:
        return self.blur_sigma if self.blur_sigma is not None else self.blur_w / 3.0

    def hierarchy(self):
        base = self.n_base if self.n_base is not None else min(self.ns)
        levels = max(n // base for n in self.ns).bit_length()
        return build_hierarchy(base, levels)


_LIST_FIELDS = {"betas", "ns", "solvers"}
_BOOL_FIELDS = {"nested", "dump_fields", "figures"}


def parse_config_file(path) -> dict:
    """Flat key=value file; '#' starts a comment, lists are comma separated."""
    known = {f.name: f for f in dataclass_fields(ExperimentConfig)}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        if key in _LIST_FIELDS:
            out[key] = tuple(item.strip() for item in value.split(",") if item.strip())
            if key != "solvers":
                out[key] = tuple(float(v) if key == "betas" else int(v) for v in out[key])
        elif key in _BOOL_FIELDS:
            out[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in ("j0", "n_base", "lin_max_iter", "outer_max", "seed"):
            out[key] = int(value)
        elif key in ("bound_lo", "bound_hi", "blur_w", "blur_sigma", "tol"):
            out[key] = float(value)
        else:
            out[key] = value
    return out


def make_backend(config: ExperimentConfig):
    if config.problem == "elliptic":
        return EllipticBackend()
    return GaussianBlurBackend(config.sigma, config.blur_w, config.boundary_mode)


def make_instance(config: ExperimentConfig, n: int, backend=None, beta=None) -> ProblemInstance:
    """Target, data, and bounds at one resolution: y_d = K u_d, f = K* y_d."""
    backend = backend if backend is not None else make_backend(config)
    beta = beta if beta is not None else config.betas[0]
    u_d = target_field(config.geometry, n)
    f = backend.apply_Kadj(backend.apply_K(u_d))
    return ProblemInstance(
        backend,
        beta,
        n,
        CellField.constant(n, config.bound_lo),
        CellField.constant(n, config.bound_hi),
        f,
    )


def _applies_string(applies: dict) -> str:
    return ";".join(f"{n}={applies[n]}" for n in sorted(applies))


def _chain_resolutions(config: ExperimentConfig) -> list[int]:
    base = config.n_base if config.n_base is not None else min(config.ns)
    out = []
    n = base
    while n <= max(config.ns):
        out.append(n)
        n *= 2
    return out


def run_sweep(config: ExperimentConfig):
    """Run every (beta, solver) chain and collect one row per requested n.

    Returns (rows, final_states) where final_states maps
    (beta, solver) -> SsnmState at the finest resolution that succeeded.
    Rows are deterministic for a fixed config except wall_seconds.
    """
    backend = make_backend(config)
    hierarchy = config.hierarchy()
    rows = []
    finals: dict[tuple, SsnmState] = {}
    for beta in config.betas:
        for solver in config.solvers:
            prev: SsnmState | None = None
            for n in _chain_resolutions(config):
                level = hierarchy.level_of(n)
                level_solver = solver if (solver == "mgcg" and level > config.j0) else "cg"
                instance = make_instance(config, n, backend, beta)
                init = None
                if config.nested and prev is not None:
                    u0, lam0 = prev.u, prev.lam
                    while u0.n < n:
                        u0, lam0 = inject(u0), inject(lam0)
                    init = SsnmState(
                        u0, lam0, update_sets(u0, lam0, instance.a, instance.b, beta)
                    )
                start = time.perf_counter()
                status = "ok"
                state = None
                failure = None
                try:
                    state = pdas_solve(
                        instance,
                        solver=level_solver,
                        hierarchy=hierarchy if level_solver == "mgcg" else None,
                        j0=config.j0 if level_solver == "mgcg" else None,
                        init=init,
                        lin_tol=config.tol,
                        lin_max_iter=config.lin_max_iter,
                        outer_max=config.outer_max,
                    )
                    prev = state
                    finals[(beta, solver)] = state
                except PdasError as err:
                    status = f"failed: {err}"
                    failure = err
                elapsed = time.perf_counter() - start
                if n not in config.ns:
                    continue
                history = state.history if state is not None else failure.history
                total_lin = sum(r["lin_iterations"] for r in history)
                solves = [r["lin_iterations"] for r in history if r["inactive"] > 0]
                applies: dict[int, int] = {}
                for r in history:
                    for level_n, count in r["hessian_applies"].items():
                        applies[level_n] = applies.get(level_n, 0) + count
                rows.append(
                    {
                        "problem": config.problem,
                        "beta": beta,
                        "n": n,
                        "solver": solver,
                        "j0": config.j0 if solver == "mgcg" else "",
                        "levels": (level - config.j0 + 1) if level_solver == "mgcg" else 1,
                        "ssnm_iters": state.outer_iters if state is not None else len(history),
                        "avg_lin_iters": round(float(np.mean(solves)), 4) if solves else 0.0,
                        "total_lin_iters": total_lin,
                        "hessian_applies_by_level": _applies_string(applies),
                        "wall_seconds": round(elapsed, 3),
                        "status": status,
                    }
                )
    rows.sort(key=lambda r: (r["problem"], r["beta"], r["solver"], r["n"]))
    return rows, finals


def write_rows_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def dump_field(field: CellField, path, fmt: str = "pgm"):
    """Write a cell field to disk as ASCII PGM or a CSV grid.

    The PGM is min-max scaled to 0..255 with the original range recorded in
    a header comment; the CSV stores n on the first line and then n rows of
    n full-precision values (bit-exact round trip via load_field_csv).
    """
    path = Path(path)
    grid = field.as_grid()
    if fmt == "pgm":
        lo, hi = float(grid.min()), float(grid.max())
        scale = 255.0 / (hi - lo) if hi > lo else 0.0
        pixels = np.rint((grid - lo) * scale).astype(int)
        lines = ["P2", f"# min={lo!r} max={hi!r}", f"{field.n} {field.n}", "255"]
        for iy in range(field.n - 1, -1, -1):  # top image row = largest y
            lines.append(" ".join(str(p) for p in pixels[iy]))
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "csv":
        lines = [str(field.n)]
        for iy in range(field.n):
            lines.append(",".join(repr(float(v)) for v in grid[iy]))
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"format must be pgm or csv, got {fmt!r}")


def load_field_csv(path) -> CellField:
    lines = Path(path).read_text().strip().splitlines()
    n = int(lines[0])
    grid = np.array([[float(v) for v in line.split(",")] for line in lines[1 : n + 1]])
    return CellField.from_grid(grid)
