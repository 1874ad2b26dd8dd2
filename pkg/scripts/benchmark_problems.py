"""Run every estimator on the shear square, the thin-triangle mesh and the holed square."""

import argparse

from crebound.meshgen import aspect_ratios
from crebound.pipeline import CRITERIA, RunConfig, run, write_csv
from crebound.problems import make_problem

CASES = [("square_shear", 0.2), ("square_shear", 0.05), ("thin_triangles", None), ("square_with_hole", 1 / 9)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--order", type=int, default=3, choices=(2, 3))
    ap.add_argument("--out", default="benchmarks.csv")
    args = ap.parse_args()

    rows = []
    for name, h in CASES:
        problem = make_problem(name, h)
        extra = f" max aspect {aspect_ratios(problem.mesh).max():.1f}" if name == "thin_triangles" else ""
        print(f"{name} h={problem.h:.4g} ndof={problem.ndof} holes={problem.mesh.n_holes}{extra}")
        for c in CRITERIA:
            row = run(problem, RunConfig(c, args.order)).row
            rows.append(row)
            print(f"  {c:8s} {row.estimate:.6g}  gates={'ok' if row.gates_ok else 'FAIL'}")
    write_csv(rows, args.out)


if __name__ == "__main__":
    main()
