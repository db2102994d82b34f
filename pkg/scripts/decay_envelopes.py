"""Inner (t1, t2) and outer matrix-element envelopes against the scale gap.

Riesz-type kernel on a Cantor measure; the inner envelope keeps only pairs
where Q sits at the goodness distance from the boundary of the son of R.

    python scripts/decay_envelopes.py --N 10 --depth 6 --gamma 0.45
"""

import argparse

from nhshift.averaging import haar_systems
from nhshift.czop import builtin_kernel, discretize_kernel
from nhshift.experiments import inner_envelope, log2_slope, outer_envelope
from nhshift.lattice import enumerate_ensemble, sample_ensemble
from nhshift.measure import make_cantor_measure


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=5)
    ap.add_argument("--depth", type=int, default=4)
    ap.add_argument("--gamma", type=float, default=0.25)
    ap.add_argument("--epsilon", type=float, default=1.0)
    ap.add_argument("--lattices", type=int, default=0, help="sample this many; 0 enumerates")
    ap.add_argument("--seed", type=int, default=9)
    ap.add_argument("--all-inner", action="store_true", help="drop the distance filter on inner pairs")
    args = ap.parse_args()

    mu = make_cantor_measure(1, 1.0, args.depth, 1 / 3)
    T = discretize_kernel(builtin_kernel("riesz", 1.0, mu, epsilon=args.epsilon), mu)
    ens = sample_ensemble(1, args.N, args.lattices, args.seed) if args.lattices else enumerate_ensemble(1, args.N)
    systems = haar_systems(mu, ens)

    inner = inner_envelope(T, systems, args.epsilon, args.gamma, far_only=not args.all_inner)
    print("inner pairs")
    print(f"{'gap':>4} {'pairs':>6} {'t1':>12} {'t2':>12}")
    for row in inner:
        print(f"{row['gap']:>4} {row['pairs']:>6} {row['t1']:>12.4e} {row['t2']:>12.4e}")
    gaps = [r["gap"] for r in inner]
    print(f"slopes: t1 {log2_slope(gaps, [r['t1'] for r in inner]):.3f}, "
          f"t2 {log2_slope(gaps, [r['t2'] for r in inner]):.3f}, target <= {-args.epsilon / 2 + 0.1:.2f}")

    outer = outer_envelope(T, systems, args.gamma)
    print("\nouter pairs")
    print(f"{'gap':>4} {'pairs':>6} {'element':>12}")
    for row in outer:
        print(f"{row['gap']:>4} {row['pairs']:>6} {row['element']:>12.4e}")
    print(f"slope: {log2_slope([r['gap'] for r in outer], [r['element'] for r in outer]):.3f}")


if __name__ == "__main__":
    main()
