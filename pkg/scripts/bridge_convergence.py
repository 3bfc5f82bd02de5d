"""Discretisation convergence of the Gaussian bridge costs.

Usage: python3 scripts/bridge_convergence.py [--mc-paths 100000] [--seed 0]

Scalar system dx = -x dt + dW on [0, 1]. For each step count N it prints
the mean-steering cost (0 -> 1) against the continuous Gramian value, the
covariance-steering cost for 1 -> 0.25, and a Monte Carlo estimate of the
path-space KL at the largest N.
"""

import argparse

import numpy as np

from reactionmap.gaussian_bridge import covariance_steering_cost, discretize, kl_monte_carlo, mean_steering_cost


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, nargs="+", default=[25, 50, 100, 200, 400, 800])
    ap.add_argument("--mc-paths", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    gramian = 1.0 / (1.0 - np.exp(-2.0))
    print(f"{'N':>5} {'mean cost':>12} {'rel err':>10} {'cov cost':>12} {'cov term err':>13}")
    for N in args.steps:
        sy = discretize([[-1.0]], [[1.0]], T=1.0, N=N)
        ms = mean_steering_cost(sy, [0.0], [1.0])
        cs = covariance_steering_cost(sy, [[1.0]], [[0.25]])
        print(f"{N:>5} {ms.cost:>12.7f} {abs(ms.cost - gramian) / gramian:>10.2e} {cs.cost:>12.7f} {cs.terminal_error:>13.1e}")
    print(f"continuous Gramian value: {gramian:.7f}")

    est, se = kl_monte_carlo(sy, ms.controls, [0.0], [[1.0]], args.mc_paths, args.seed, gains=cs.gains, means=ms.means)
    total = ms.cost + cs.cost
    print(f"N={N}: quadratic cost {total:.5f}, Monte Carlo {est:.5f} +- {se:.5f} ({abs(est - total) / se:.2f} se)")


if __name__ == "__main__":
    main()
