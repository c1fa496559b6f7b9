"""Wall-clock of the SURF full path against the ACS 100-penalty grid.

Sweeps the grid size I at fixed M and reports total and per-iteration time;
the per-iteration growth exponent in I is fitted on a log-log scale.
"""
import argparse
import time

import numpy as np

from surf.acs import AcsConfig, acs_path
from surf.export import write_table
from surf.simulate import SimSpec, gen_dataset
from surf.solver import SurfConfig, trace_path


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--m", type=int, default=500)
    ap.add_argument("--epsilon", type=float, default=0.01)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--skip-acs", action="store_true")
    ap.add_argument("--csv")
    args = ap.parse_args()
    rows = []
    for i in args.sizes:
        d, _ = gen_dataset(SimSpec(m=args.m, i=i, seed=0))
        for rep in range(args.repeats):
            t0 = time.perf_counter()
            path = trace_path(d, SurfConfig(args.epsilon))
            wall = time.perf_counter() - t0
            steps = max(len(path) - 1, 1)
            rows.append({"solver": "surf", "i": i, "repeat": rep, "wall_s": wall, "iterations": steps,
                         "per_iter_s": wall / steps})
            if not args.skip_acs:
                t0 = time.perf_counter()
                res = acs_path(d, AcsConfig())
                wall = time.perf_counter() - t0
                sweeps = max(sum(r.sweeps for r in res.results), 1)
                rows.append({"solver": "acs", "i": i, "repeat": rep, "wall_s": wall, "iterations": sweeps,
                             "per_iter_s": wall / sweeps})
    for solver in ("surf", "acs"):
        sub = [r for r in rows if r["solver"] == solver]
        if not sub:
            continue
        for i in args.sizes:
            w = [r["wall_s"] for r in sub if r["i"] == i]
            p = [r["per_iter_s"] for r in sub if r["i"] == i]
            print(f"{solver:4s} I={i:3d}: total {np.mean(w):.3f}s, per iteration {1e3 * np.mean(p):.3f}ms")
        if len(args.sizes) > 1:
            per = [np.mean([r["per_iter_s"] for r in sub if r["i"] == i]) for i in args.sizes]
            slope = np.polyfit(np.log(args.sizes), np.log(per), 1)[0]
            print(f"{solver:4s} per-iteration time ~ I^{slope:.2f}")
    if args.csv:
        write_table(rows, ["solver", "i", "repeat", "wall_s", "iterations", "per_iter_s"], args.csv)


if __name__ == "__main__":
    main()
