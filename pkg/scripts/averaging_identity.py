"""Half identity for really-good R over a fully enumerated lattice ensemble.

    python scripts/averaging_identity.py --N 10 --r 8 --gamma 0.45
"""

import argparse

import numpy as np

from nhshift.averaging import verify_half_identity
from nhshift.czop import OperatorMatrix
from nhshift.goodness import Equalizer, GoodnessParams
from nhshift.lattice import enumerate_ensemble
from nhshift.measure import DiscreteMeasure


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=10)
    ap.add_argument("--r", type=int, default=8)
    ap.add_argument("--gamma", type=float, default=0.45)
    ap.add_argument("--atoms", type=int, default=14)
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    mu = DiscreteMeasure(rng.uniform(0.25, 0.75, (args.atoms, 1)), rng.uniform(0.2, 1, args.atoms), 1.0)
    ens = enumerate_ensemble(1, args.N)
    eq = Equalizer(GoodnessParams(args.r, args.gamma))
    print(f"{len(ens)} lattices")
    for trial in range(args.trials):
        T = OperatorMatrix.random(mu, rng)
        f, g = rng.standard_normal((2, mu.n_atoms))
        for s in ("ge", "gt", "all"):
            res = verify_half_identity(T, f, g, ens, eq, s)
            print(f"trial {trial} {s:>3}: half={res.lhs:+.12f} really_good={res.rhs:+.12f} diff={res.abs_diff:.1e}")


if __name__ == "__main__":
    main()
