"""Numerically verify the convergence bound on a small quadratic.

Runs the wrapper under the prescribed effective step size for a grid of
(tau, beta) settings, averages min-gradient-norm over seeds, and compares
against the theoretical right-hand side. Per-block counts are chosen so the
local-drift surrogate's validity range (gamma * L * tau <= 1/6) holds.
"""

import argparse

import numpy as np

from slowmo_sim import (
    BaseOptimizerConfig,
    BoundInputs,
    NoiseModel,
    QuadraticProblem,
    Simulation,
    SlowMoConfig,
    check_bound,
    gamma_eff,
    local_sgd_bias_surrogate,
    prescribed_gamma,
)
from slowmo_sim.theory_checker import measured_bias_term

X0 = np.array([1.0, -1.0, 0.5, -1.5])
CONFIGS = [(1, 0.0, 2592), (1, 0.5, 2592), (12, 0.0, 864), (12, 0.5, 216)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20,
                    help="number of independent runs per setting (>= 20 "
                         "required by the checker)")
    ap.add_argument("--m", type=int, default=2)
    args = ap.parse_args()

    m, L, sigma2 = args.m, 1.0, 1.0
    prob = QuadraticProblem(np.eye(4), [np.zeros(4)] * m,
                            NoiseModel("additive-gaussian", sigma2=sigma2))
    delta = 0.5 * float(X0 @ X0)

    print(f"m={m}  L={L}  sigma^2={sigma2}  Delta={delta}  seeds={args.seeds}")
    print(f"{'tau':>4} {'beta':>5} {'gamma':>9} {'LHS':>9} {'RHS':>9}  verdict")
    for tau, beta, T in CONFIGS:
        gamma = prescribed_gamma(m, tau, T, L, beta)
        traces = []
        for seed in range(args.seeds):
            sim = Simulation(prob, BaseOptimizerConfig("plain-sgd"),
                             SlowMoConfig(alpha=1.0, beta=beta, tau=tau),
                             protocol="allreduce", gamma=gamma, T=T,
                             seed=seed, x0=X0, log_bias=(tau == 1))
            traces.append(sim.run())
        if tau == 1:
            bias = measured_bias_term(traces)
        else:
            bias = local_sgd_bias_surrogate(gamma, L, sigma2, 0.0, tau)
        report = check_bound(traces, BoundInputs(
            delta=delta, m=m, tau=tau, T=T, L=L, V=sigma2 / m,
            alpha=1.0, beta=beta, bias_term=bias,
            gamma_eff=gamma_eff(1.0, gamma, beta)))
        verdict = ("holds" if report["holds"]
                   else "violated" if report["holds"] is False
                   else f"n/a ({report['reason']})")
        print(f"{tau:>4} {beta:>5.2f} {gamma:>9.5f} "
              f"{report['lhs']:>9.5f} {report['rhs']:>9.5f}  {verdict}")


if __name__ == "__main__":
    main()
