"""Trade geometric energy against bridge cost on a hybrid instance.

Usage: python3 scripts/lambda_sweep.py [instance.json] [--lambdas 0 0.1 ...]

Defaults to the tie fixture. Prints the selected support per lambda, the
pool members' (E, J) pairs, the lower envelope and the lambda values where
the selected support changes.
"""

import argparse
from pathlib import Path

import numpy as np

from reactionmap.hybrid_optimizer import HybridConfig, envelope, lambda_sweep
from reactionmap.instance import ProblemInstance

DEFAULT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "tie.json"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("instance", nargs="?", default=str(DEFAULT))
    ap.add_argument("--lambdas", type=float, nargs="+", default=list(np.round(np.linspace(0, 2, 21), 3)))
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    inst = ProblemInstance.load(args.instance)
    g = inst.graph()
    cfg = HybridConfig(0.0, inst.solve_config(rng_seed=args.seed), inst.dynamics_params(), inst.marginal_pair(), args.steps)
    sols = lambda_sweep(g, cfg, args.lambdas)
    name = lambda s: ";".join(g.edge_ids[e] for e in s) or "(empty)"

    print("pool:")
    for t in sols[-1].pool_trace:
        print(f"  {name(t['support']):<24} E={t['E']:.6f}  J={t['J']:.6f}")
    env = envelope(sols[-1].pool_trace, args.lambdas)
    print(f"\n{'lambda':>8} {'F':>10} {'envelope':>10}  support")
    for s, e in zip(sols, env):
        print(f"{s.lam:>8.3f} {s.total:>10.6f} {e:>10.6f}  {name(s.support)}")

    # exact crossing points between consecutive winners
    for a, b in zip(sols, sols[1:]):
        if a.support != b.support:
            lam = (b.geometric_cost - a.geometric_cost) / (a.dynamic_cost_value - b.dynamic_cost_value)
            print(f"support changes {name(a.support)} -> {name(b.support)} at lambda = {lam:.6f}")


if __name__ == "__main__":
    main()
