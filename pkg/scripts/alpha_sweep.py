"""Y-vs-V phase change: which support wins as alpha varies.

Usage: python3 scripts/alpha_sweep.py [--points 19] [--csv out.csv]

For each alpha the oracle solution on the Y-vs-V library is compared with
the two hand-evaluated forest supports. The crossover alpha, where both
supports cost the same, is located with Brent's method.
"""

import argparse
import csv
import sys

import numpy as np
from scipy.optimize import brentq

from reactionmap.bot_solver import oracle_solve
from reactionmap.generators import y_vs_v


def y_energy(a):
    return 2 * 0.5**a * np.sqrt(2) + 1.0


def v_energy(a):
    return 2 * 0.5**a * np.sqrt(5)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=19)
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args()

    g = y_vs_v()
    alphas = np.linspace(0.05, 0.95, args.points)
    rows = []
    for a in alphas:
        sol = oracle_solve(g, float(a))
        rows.append({
            "alpha": round(float(a), 6),
            "support": ";".join(g.edge_ids[e] for e in sol.support),
            "energy": sol.energy_value,
            "E_Y": y_energy(a),
            "E_V": v_energy(a),
        })
    cross = brentq(lambda a: y_energy(a) - v_energy(a), 0.05, 0.999)

    out = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    out.writeheader()
    out.writerows(rows)
    print(f"# Y and V cost the same at alpha = {cross:.6f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
