"""Estimator table and h-slopes for the polynomial rectangle problem."""

import argparse

from crebound.pipeline import CRITERIA, RunConfig, loglog_slope, run, write_csv
from crebound.problems import make_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--hs", type=float, nargs="+", default=[0.25, 0.125, 0.0625])
    ap.add_argument("--order", type=int, default=3, choices=(2, 3))
    ap.add_argument("--out", default="convergence.csv")
    args = ap.parse_args()

    rows = []
    print(f"{'h':>8} {'ndof':>6} {'e_ex':>10} " + " ".join(f"{c:>10}" for c in CRITERIA))
    for h in args.hs:
        problem = make_problem("analytic_rectangle", h)
        row = [run(problem, RunConfig(c, args.order)).row for c in CRITERIA]
        rows += row
        print(f"{h:8.4f} {row[0].ndof:6d} {row[0].e_ex:10.5f} " + " ".join(f"{r.estimate:10.5f}" for r in row))
    if len(args.hs) > 1:
        e_ex = [r.e_ex for r in rows if r.criterion == CRITERIA[0]]
        print(f"slope e_ex {loglog_slope(args.hs, e_ex):.3f}")
        for c in CRITERIA:
            print(f"slope {c:7s} {loglog_slope(args.hs, [r.estimate for r in rows if r.criterion == c]):.3f}")
    write_csv(rows, args.out)


if __name__ == "__main__":
    main()
