"""Test RMSE versus training size for SURF and ACS (CV-selected CP models).

Planted sparse rank-2 truth on an 8 x 8 grid, noise scaled for SNR ~ 5.
Prints a per-seed table and the medians; optionally writes a CSV.
"""
import argparse
import time

import numpy as np

from surf.deflation import CvConfig, predict, rmse, sequential_fit
from surf.export import write_table
from surf.simulate import SimSpec, gen_split, gen_truth, signal_variance
from surf.solver import SurfConfig


def run(sizes=(100, 200, 400), seeds=range(10), i=8, rank=2, s=50.0, snr=5.0, m_test=500,
        epsilon=1e-3, solvers=("surf", "acs")):
    rows = []
    for seed in seeds:
        w, _ = gen_truth(i, rank, s, seed)
        noise_sd = float(np.sqrt(signal_variance(w) / snr))
        for m in sizes:
            spec = SimSpec(m=m, i=i, r=rank, s=s, noise_sd=noise_sd, seed=seed)
            train, x_test, y_test, _ = gen_split(spec, m_test)
            for solver in solvers:
                t0 = time.perf_counter()
                model = sequential_fit(train, solver, CvConfig(seed=seed), SurfConfig(epsilon))
                rows.append({
                    "seed": seed, "m": m, "solver": solver, "rank": model.rank,
                    "test_rmse": rmse(y_test, predict(model, x_test)),
                    "wall_s": time.perf_counter() - t0,
                })
    return rows


def medians(rows):
    out = {}
    for r in rows:
        out.setdefault((r["solver"], r["m"]), []).append(r["test_rmse"])
    return {k: float(np.median(v)) for k, v in out.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--epsilon", type=float, default=1e-3)
    ap.add_argument("--csv")
    args = ap.parse_args()
    rows = run(seeds=range(args.seeds), epsilon=args.epsilon)
    for r in rows:
        print(f"seed={r['seed']} m={r['m']} {r['solver']:4s} rank={r['rank']:2d} "
              f"rmse={r['test_rmse']:.5f} {r['wall_s']:.1f}s")
    for (solver, m), v in sorted(medians(rows).items()):
        print(f"median {solver:4s} m={m}: {v:.5f}")
    if args.csv:
        write_table(rows, ["seed", "m", "solver", "rank", "test_rmse", "wall_s"], args.csv)


if __name__ == "__main__":
    main()
