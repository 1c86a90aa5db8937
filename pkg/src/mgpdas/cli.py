"""Command-line experiment runner.

``solve`` sweeps active-set solves over resolutions and regularization
weights and writes results.csv (plus optional field dumps and report
figures) into the output directory; its exit code is nonzero if any sweep
point failed.  ``diagnose`` runs the desk-scale studies: the two-grid
spectral-distance rate, spectral-distance sanity checks against a random
direction search, and the W-cycle operation-count audit.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, plots
from .blur import GaussianBlurBackend
from .elliptic import EllipticBackend
from .grid import CellField, build_hierarchy
from .harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    dump_field,
    parse_config_file,
    run_sweep,
    write_rows_csv,
)
from .mgprec import apply_Z, build_prec, predict_cost
from .targets import disk_inactive_mask, target_field


def _float_list(text):
    return tuple(float(v) for v in text.split(","))


def _int_list(text):
    return tuple(int(v) for v in text.split(","))


def _str_list(text):
    return tuple(v.strip() for v in text.split(","))


def _build_parser():
    parser = argparse.ArgumentParser(prog="mgpdas", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run constrained solves and write results.csv")
    solve.add_argument("--problem", choices=("elliptic", "deblur"))
    solve.add_argument("--beta", type=_float_list, help="comma list of regularization weights")
    solve.add_argument("--n", type=_int_list, help="comma list of resolutions")
    solve.add_argument("--solver", type=_str_list, help="cg, mgcg, or cg,mgcg")
    solve.add_argument("--j0", type=int, help="preconditioner base level index")
    solve.add_argument("--n-base", type=int, help="hierarchy base resolution")
    solve.add_argument("--w", type=float, help="blur window half-width")
    solve.add_argument("--sigma", type=float, help="blur kernel width (default w/3)")
    solve.add_argument("--boundary-mode", choices=("zero_extension", "restricted"))
    solve.add_argument("--bounds", help="lower,upper control bounds (default 0,1)")
    solve.add_argument("--geometry", help="target geometry id")
    solve.add_argument("--tol", type=float, help="linear solve tolerance")
    solve.add_argument("--outer-max", type=int)
    solve.add_argument("--lin-max-iter", type=int)
    solve.add_argument("--cold-start", action="store_true", help="disable warm starts")
    solve.add_argument("--dump-fields", action="store_true", help="write u_min files")
    solve.add_argument("--no-figures", action="store_true")
    solve.add_argument("--seed", type=int)
    solve.add_argument("--config", help="key=value config file; flags override")
    solve.add_argument("--out", required=True, help="output directory")

    diag = sub.add_parser("diagnose", help="run desk-scale diagnostic studies")
    diag.add_argument(
        "--study", required=True, choices=("twogrid-rate", "spectral", "wcycle-count")
    )
    diag.add_argument("--problem", choices=("elliptic", "deblur"), default="deblur")
    diag.add_argument("--beta", type=float, default=0.1)
    diag.add_argument("--n", type=_int_list, default=(16, 32))
    diag.add_argument("--w", type=float, default=0.1)
    diag.add_argument("--sigma", type=float)
    diag.add_argument("--boundary-mode", choices=("zero_extension", "restricted"), default="restricted")
    diag.add_argument("--levels", type=int, default=4, help="ladder depth for wcycle-count")
    diag.add_argument("--seed", type=int, default=0)
    diag.add_argument("--trials", type=int, default=5)
    diag.add_argument("--m", type=int, default=6, help="dense dimension for spectral study")
    diag.add_argument("--no-figures", action="store_true")
    diag.add_argument("--out", required=True)
    return parser


def _solve_config(args) -> ExperimentConfig:
    values = parse_config_file(args.config) if args.config else {}
    overrides = {
        "problem": args.problem,
        "betas": args.beta,
        "ns": args.n,
        "solvers": args.solver,
        "j0": args.j0,
        "n_base": args.n_base,
        "blur_w": args.w,
        "blur_sigma": args.sigma,
        "boundary_mode": args.boundary_mode,
        "geometry": args.geometry,
        "tol": args.tol,
        "outer_max": args.outer_max,
        "lin_max_iter": args.lin_max_iter,
        "seed": args.seed,
        "out_dir": args.out,
    }
    if args.bounds:
        lo, hi = (float(v) for v in args.bounds.split(","))
        overrides["bound_lo"], overrides["bound_hi"] = lo, hi
    if args.cold_start:
        overrides["nested"] = False
    if args.dump_fields:
        overrides["dump_fields"] = True
    if args.no_figures:
        overrides["figures"] = False
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def _run_solve(args) -> int:
    config = _solve_config(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, finals = run_sweep(config)
    write_rows_csv(rows, out / "results.csv")
    print(f"wrote {out / 'results.csv'} ({len(rows)} rows)")
    for row in rows:
        print(
            f"  {row['problem']} beta={row['beta']:g} n={row['n']} {row['solver']}: "
            f"ssnm={row['ssnm_iters']} avg_lin={row['avg_lin_iters']} [{row['status']}]"
        )
    single = len(config.betas) == 1 and len(config.solvers) == 1
    if config.dump_fields:
        for (beta, solver), state in finals.items():
            stem = f"u_min_{state.u.n}" if single else f"u_min_{solver}_beta{beta:g}_{state.u.n}"
            dump_field(state.u, out / f"{stem}.pgm", "pgm")
            dump_field(state.u, out / f"{stem}.csv", "csv")
    if config.figures:
        plots.save_iterations_png(rows, out / "iterations.png")
        for (beta, solver), state in finals.items():
            stem = f"u_min_{state.u.n}" if single else f"u_min_{solver}_beta{beta:g}_{state.u.n}"
            plots.save_field_png(
                state.u,
                out / f"{stem}.png",
                title=f"{config.problem} control, beta={beta:g}, n={state.u.n} ({solver})",
            )
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def _diag_backend(args):
    if args.problem == "elliptic":
        return EllipticBackend()
    sigma = args.sigma if args.sigma is not None else args.w / 3.0
    return GaussianBlurBackend(sigma, args.w, args.boundary_mode)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path}")


def _run_diagnose(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.study == "twogrid-rate":
        rows = diagnostics.two_grid_rate_study(
            _diag_backend(args), args.beta, args.n, disk_inactive_mask
        )
        _write_csv(
            out / "twogrid_rate.csv",
            ["n", "dim", "h", "mu_boundary", "driver", "distance"],
            [
                [r["n"], r["dim"], r["h"], r["mu_boundary"], r["driver"], r["distance"]]
                for r in rows
            ],
        )
        for r in rows:
            print(f"  n={r['n']}: distance={r['distance']:.4f} driver={r['driver']:.4f}")
        if not args.no_figures:
            plots.save_rate_png(rows, out / "twogrid_rate.png")
        return 0
    if args.study == "spectral":
        rng = np.random.default_rng(args.seed)
        rows = []
        for trial in range(args.trials):
            a = rng.standard_normal((args.m, args.m))
            a = a @ a.T + args.m * np.eye(args.m)
            b = rng.standard_normal((args.m, args.m))
            b = b @ b.T + args.m * np.eye(args.m)
            d = diagnostics.spectral_distance(a, b)
            dirs = rng.standard_normal((100000, args.m))
            qa = np.einsum("ij,jk,ik->i", dirs, a, dirs)
            qb = np.einsum("ij,jk,ik->i", dirs, b, dirs)
            sampled = float(np.max(np.abs(np.log(qa / qb))))
            rows.append([trial, d, sampled, d - sampled])
            print(f"  trial {trial}: distance={d:.6f} sampled={sampled:.6f}")
        _write_csv(
            out / "spectral_check.csv",
            ["trial", "distance", "sampled_max", "gap"],
            rows,
        )
        return 0
    # wcycle-count
    n_fine = max(args.n)
    depth = args.levels - 1
    base = n_fine >> depth
    hier = build_hierarchy(base, args.levels)
    backend = _diag_backend(args)
    mask = disk_inactive_mask(n_fine)
    state = build_prec(hier, mask, 0, args.beta, backend)
    rng = np.random.default_rng(args.seed)
    v = CellField(n_fine, np.where(mask.flags, rng.standard_normal(n_fine * n_fine), 0.0))
    apply_Z(state, depth, v)
    applies = state.applies_by_level()
    rows = []
    for k in range(depth + 1):
        n_k = state.masks[k].n
        predicted = 2 ** (depth - 1 - k) if 0 < k < depth else (0 if k == depth else None)
        rows.append([k, n_k, applies[n_k], "" if predicted is None else predicted])
        print(f"  level {k} (n={n_k}): hessian applies={applies[n_k]}")
    print(f"  base solves={state.base_solves} (predicted {2 ** (depth - 1)})")
    rel = predict_cost(args.levels, 0.25, 1.0 if args.problem == "elliptic" else 2.0, 50.0, 0.1)
    print(f"  predicted relative cost f(j)/t(j) ~ {rel:.3f}")
    _write_csv(
        out / "wcycle_counts.csv",
        ["level", "n", "hessian_applies", "predicted"],
        rows,
    )
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "solve":
        return _run_solve(args)
    return _run_diagnose(args)


if __name__ == "__main__":
    sys.exit(main())
