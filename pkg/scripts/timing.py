"""Wall time of the works stage: global solve with the EET norm against vertex-by-vertex EET."""

import argparse
import statistics

from crebound.pipeline import RunConfig, run
from crebound.problems import make_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=0.0625)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    problem = make_problem("analytic_rectangle", args.h)
    run(problem, RunConfig("eet"))  # warm-up, discarded
    times = {}
    for c in ("eet", "classic", "l2", "erdc"):
        rows = [run(problem, RunConfig(c)).row for _ in range(args.repeat)]
        times[c] = statistics.median(r.t_works for r in rows)
        print(f"{c:8s} works {times[c]:.4f}s  elements {statistics.median(r.t_elements for r in rows):.4f}s")
    ratio = times["eet"] / times["classic"]
    print(f"global/classic works-stage ratio: {ratio:.2f} ({'ok' if ratio < 1.5 else 'slow'})")


if __name__ == "__main__":
    main()
