"""Averaged Haar compression of a Riesz-type operator against the decomposition bound.

    python scripts/t1_bound.py --N 5 --depth 4 --r 2
"""

import argparse
import json

from nhshift.averaging import haar_systems
from nhshift.czop import builtin_kernel, discretize_kernel
from nhshift.decompose import DecompositionParams
from nhshift.experiments import carleson_chain, t1_bound_report
from nhshift.lattice import enumerate_ensemble
from nhshift.measure import make_cantor_measure


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=5)
    ap.add_argument("--depth", type=int, default=4)
    ap.add_argument("--r", type=int, default=2)
    ap.add_argument("--gamma", type=float, default=0.25)
    args = ap.parse_args()

    mu = make_cantor_measure(1, 1.0, args.depth, 1 / 3)
    T = discretize_kernel(builtin_kernel("riesz", 1.0, mu), mu)
    ens = enumerate_ensemble(1, args.N)
    systems = haar_systems(mu, ens)
    params = DecompositionParams(args.r, 1.0, args.gamma)

    # constant weights 1/2 make each ledger exactly half of that lattice's compressed form
    rep = t1_bound_report(T, ens, systems, lambda s: {Q: 0.5 for Q in s.cubes()}, params)
    rep["carleson"] = carleson_chain(T, systems, args.r)
    print(json.dumps(rep, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
