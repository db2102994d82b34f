"""Worst bad-cube probability per r for the cubes a Cantor measure meets.

    python scripts/goodness_scan.py --N 10 --gamma 0.25
"""

import argparse
import json

from nhshift.averaging import haar_systems
from nhshift.experiments import log2_slope
from nhshift.goodness import goodness_scan
from nhshift.lattice import sample_ensemble
from nhshift.measure import make_cantor_measure


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=10)
    ap.add_argument("--gamma", type=float, default=0.25)
    ap.add_argument("--depth", type=int, default=6)
    ap.add_argument("--lattices", type=int, default=4)
    ap.add_argument("--seed", type=int, default=9)
    ap.add_argument("--json", help="write the rows here")
    args = ap.parse_args()

    mu = make_cantor_measure(1, 1.0, args.depth, 1 / 3)
    ens = sample_ensemble(1, args.N, args.lattices, args.seed)
    cubes = sorted({Q for s in haar_systems(mu, ens) for Q in s.cubes()})
    rs = range(1, args.N + 1)
    rows = goodness_scan(cubes, rs, args.gamma)

    worst = []
    print(f"{'r':>3} {'worst p_bad':>12}")
    for r in rs:
        v = max(row["p_bad"] for row in rows if row["r"] == r and row["generation"] >= r)
        worst.append(v)
        print(f"{r:>3} {v:>12.6f}")
    print(f"log2 slope: {log2_slope(list(rs), worst):.4f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
