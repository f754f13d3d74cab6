"""Demonstrate the exact algebraic reductions of the slow-momentum wrapper.

Four special cases collapse to classical algorithms; each is checked here
against an independently coded reference loop, printing the max coordinate
difference over the whole trajectory of worker averages:

  * tau=1, alpha=1, exact averaging        -> heavy-ball SGD
  * beta=0, alpha=1, no inner communication -> local SGD
  * m=1, beta=0, alpha<1                    -> slow/fast-weights interpolation
  * overlap push-sum with zero delay        -> synchronous push-sum

Usage: python3 scripts/reduction_checks.py [--steps 100] [--seed 0]
"""

import argparse

import numpy as np

from slowmo_sim import (
    BaseOptimizerConfig,
    DelayModel,
    NoiseModel,
    Simulation,
    SlowMoConfig,
    build_quadratic,
)
from slowmo_sim.references import (
    heavy_ball_reference,
    local_sgd_reference,
    lookahead_reference,
)


def xbar_history(trace):
    return [np.asarray(r["x_bar"]) for r in trace.records]


def max_diff(a, b):
    return max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    noise = NoiseModel("additive-gaussian", sigma2=0.4)
    rows = []

    prob = build_quadratic(m=4, dimension=10, noise=noise, seed=31,
                           l_min=0.5, l_max=2.0, heterogeneity=1.0)
    sim = Simulation(prob, BaseOptimizerConfig("plain-sgd"),
                     SlowMoConfig(alpha=1.0, beta=0.9, tau=1),
                     protocol="allreduce", gamma=0.02, T=args.steps,
                     seed=args.seed)
    ref = heavy_ball_reference(prob, 0.02, 0.9, args.steps, seed=args.seed)
    rows.append(("tau=1 wrapper == heavy-ball", max_diff(xbar_history(sim.run()), ref)))

    T = max(args.steps // 12, 2)
    prob = build_quadratic(m=4, dimension=6, noise=noise, seed=32,
                           l_min=0.5, l_max=2.0, heterogeneity=1.0)
    sim = Simulation(prob, BaseOptimizerConfig("plain-sgd"),
                     SlowMoConfig(alpha=1.0, beta=0.0, tau=12),
                     protocol="local", gamma=0.05, T=T, seed=args.seed)
    ref = local_sgd_reference(prob, 0.05, tau=12, T=T, seed=args.seed)
    rows.append(("beta=0 wrapper == local SGD", max_diff(xbar_history(sim.run()), ref)))

    T = max(args.steps // 5, 2)
    prob = build_quadratic(m=1, dimension=6, noise=noise, seed=33,
                           l_min=0.5, l_max=2.0)
    sim = Simulation(prob, BaseOptimizerConfig("plain-sgd"),
                     SlowMoConfig(alpha=0.5, beta=0.0, tau=5),
                     protocol="local", gamma=0.08, T=T, seed=args.seed)
    ref = lookahead_reference(prob, 0.08, alpha=0.5, tau=5, T=T, seed=args.seed)
    rows.append(("m=1 interpolation == slow/fast weights",
                 max_diff(xbar_history(sim.run()), ref)))

    prob = build_quadratic(m=8, dimension=5, noise=noise, seed=34,
                           l_min=0.5, l_max=2.0, heterogeneity=1.0)
    common = dict(gamma=0.03, total_steps=2 * args.steps, seed=args.seed)
    sgp = Simulation(prob, BaseOptimizerConfig("plain-sgd"),
                     SlowMoConfig(alpha=1.0, beta=0.5, tau=12),
                     protocol="sgp", **common)
    osgp = Simulation(prob, BaseOptimizerConfig("plain-sgd"),
                      SlowMoConfig(alpha=1.0, beta=0.5, tau=12),
                      protocol="osgp",
                      delay=DelayModel(kind="constant", rounds=0), **common)
    rows.append(("zero-delay overlap == synchronous push-sum",
                 max_diff(xbar_history(sgp.run()), xbar_history(osgp.run()))))

    width = max(len(name) for name, _ in rows)
    for name, diff in rows:
        print(f"{name:<{width}}  max|diff| = {diff:.3e}")


if __name__ == "__main__":
    main()
