"""Command-line entry point: ``verify run | sweep | check-mesh``."""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import nullcontext

import numpy as np

from .errors import CREError
from .mesh import incidence_matrix, kernel_basis, read_mesh
from .pipeline import ALIASES, CRITERIA, RunConfig, loglog_slope, run, write_csv
from .problems import PROBLEMS, make_problem
from .prolongation import smith_factorize


def _thread_limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _load_problem(name, h, mesh_path):
    problem = make_problem(name, h)
    if mesh_path:
        problem.mesh = read_mesh(mesh_path)
    return problem


def _print_row(row):
    print(
        f"{row.problem:>18s} h={row.h:<8.4g} ndof={row.ndof:<6d} {row.criterion:>7s} p={row.order} "
        f"estimate={row.estimate:.6g} e_ex={row.e_ex:.6g} eff={row.effectivity:.4g} "
        f"gates={'ok' if row.gates_ok else 'FAIL'}"
    )


def cmd_run(args) -> int:
    problem = _load_problem(args.problem, args.h, args.mesh)
    result = run(problem, RunConfig(args.criterion, args.order, args.alpha))
    _print_row(result.row)
    if args.out:
        write_csv([result.row], args.out)
    return 0 if result.row.gates_ok else 1


def cmd_sweep(args) -> int:
    args.criteria = [ALIASES.get(c, c) for c in args.criteria]
    rows = []
    for h in args.hs:
        problem = make_problem(args.problem, h)
        for crit in args.criteria:
            rows.append(run(problem, RunConfig(crit, args.order, args.alpha)).row)
            _print_row(rows[-1])
    if args.out:
        write_csv(rows, args.out)
    if len(args.hs) >= 2:
        for crit in args.criteria:
            sel = [r for r in rows if r.criterion == crit]
            print(f"slope {crit}: {loglog_slope([r.h for r in sel], [r.estimate for r in sel]):.3f}")
        sel = [r for r in rows if r.criterion == args.criteria[0]]
        if all(np.isfinite(r.e_ex) for r in sel):
            print(f"slope e_ex: {loglog_slope([r.h for r in sel], [r.e_ex for r in sel]):.3f}")
    return 0 if all(r.gates_ok for r in rows) else 1


def cmd_check_mesh(args) -> int:
    mesh = read_mesh(args.mesh)
    c = mesh.counts()
    delta = incidence_matrix(mesh)
    kb = kernel_basis(mesh, delta)
    smith = smith_factorize(mesh, delta, kb)
    dim_ker = c["E_int"] - smith.rank
    dim_left = c["T"] - smith.rank
    euler = c["T"] - c["E"] + c["V"]
    for k, v in c.items():
        print(f"{k:>10s}: {v}")
    print(f"{'euler':>10s}: {euler} (expected {1 - c['holes']})")
    print(f"{'ker Delta':>10s}: {dim_ker} (expected V_int + h = {c['V_int'] + c['holes']})")
    print(f"{'ker Delta^T':>10s}: {dim_left} (expected 1)")
    ok = (
        euler == 1 - c["holes"]
        and dim_ker == c["V_int"] + c["holes"] == kb.ncols
        and dim_left == 1
        and c["E_border"] == c["V_border"]
    )
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="verify", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--problem", choices=sorted(PROBLEMS), default="analytic_rectangle")
        p.add_argument("--order", type=int, choices=(2, 3), default=3)
        p.add_argument("--alpha", choices=("half", "length"), default="half")
        p.add_argument("--out", default=None, help="CSV output path")
        p.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")

    p = sub.add_parser("run", help="run one estimator on one problem")
    common(p)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--criterion", choices=CRITERIA + tuple(ALIASES), default="eet")
    p.add_argument("--mesh", default=None, help="mesh file replacing the generated mesh")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="convergence series over several mesh sizes")
    common(p)
    p.add_argument("--hs", type=float, nargs="+", default=[0.25, 0.125, 0.0625])
    p.add_argument("--criteria", nargs="+", choices=CRITERIA + tuple(ALIASES), default=list(CRITERIA))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check-mesh", help="topology diagnostics of a mesh file")
    p.add_argument("mesh")
    p.set_defaults(func=cmd_check_mesh)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        with _thread_limit(getattr(args, "threads", None)):
            return args.func(args)
    except CREError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
