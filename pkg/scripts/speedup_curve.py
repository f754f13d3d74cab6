"""Measure how the averaged stationarity metric improves with worker count.

For each m, runs the wrapper under the prescribed step size on the same
quadratic family (identical curvature and optimum across workers, so drift
contributes nothing and the variance term dominates) and reports the
seed-averaged metric with its standard error. Doubling m should shrink the
noise floor roughly in proportion.
"""

import argparse
import csv
import math
import sys

import numpy as np

from slowmo_sim import (
    BaseOptimizerConfig,
    NoiseModel,
    QuadraticProblem,
    Simulation,
    SlowMoConfig,
    prescribed_gamma,
)
from slowmo_sim.theory_checker import lhs_from_records

X0 = np.array([1.0, -1.0, 0.5, -1.5])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 4, 16])
    ap.add_argument("--tau", type=int, default=12)
    ap.add_argument("--blocks", type=int, default=400)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--protocol", default="local")
    ap.add_argument("--csv", help="optional path for a machine-readable copy")
    args = ap.parse_args()

    rows = []
    for m in args.workers:
        prob = QuadraticProblem(np.eye(4), [np.zeros(4)] * m,
                                NoiseModel("additive-gaussian", sigma2=1.0))
        gamma = prescribed_gamma(m, args.tau, args.blocks, 1.0, args.beta)
        metrics = []
        for seed in range(args.seeds):
            sim = Simulation(prob, BaseOptimizerConfig("plain-sgd"),
                             SlowMoConfig(alpha=1.0, beta=args.beta, tau=args.tau),
                             protocol=args.protocol, gamma=gamma,
                             T=args.blocks, seed=seed, x0=X0)
            metrics.append(lhs_from_records(sim.run().records, args.tau, args.blocks))
        mean = float(np.mean(metrics))
        se = float(np.std(metrics, ddof=1) / math.sqrt(len(metrics)))
        rows.append({"m": m, "gamma": gamma, "metric_mean": mean, "metric_se": se})
        print(f"m={m:>3}  gamma={gamma:.5f}  "
              f"avg min grad-norm^2 = {mean:.5f} +/- {se:.5f}")

    for prev, cur in zip(rows, rows[1:]):
        ratio = prev["metric_mean"] / cur["metric_mean"]
        print(f"m={prev['m']} -> m={cur['m']}: improvement x{ratio:.2f}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.csv}", file=sys.stderr)


if __name__ == "__main__":
    main()
