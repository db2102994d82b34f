"""Good and bad cubes, bad-cube probabilities and the probability equalization.

A cube Q is (r, gamma)-good in a lattice if every R of the lattice with
l(R) >= 2^r l(Q) keeps Q at distance at least l(R)^(1-gamma) l(Q)^gamma from
the boundaries of its children.  For R not containing Q the distance from Q to
sk(R) is at least the distance from Q to the boundary of the same-generation
ancestor of Q, which is part of that ancestor's skeleton; so only ancestors
need checking.  Goodness therefore depends only on grids strictly coarser
than g(Q).

Equalization: with p_Q = P(Q good | Q in D) >= 1/2 and an independent uniform
xi_Q, "really good" means good and xi_Q <= 1/(2 p_Q), an event of
probability exactly 1/2 for every cube.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidParameterError, ResourceLimitError
from .lattice import ENUMERATION_CAP, Cube, ShiftedDyadicLattice, bits_of, skeleton_distance


def default_gamma(m: float, epsilon: float) -> float:
    return epsilon / (2 * (m + epsilon))


@dataclass(frozen=True)
class GoodnessParams:
    r: int
    gamma: float
    seed: int = 0

    def __post_init__(self):
        if self.r < 1:
            raise InvalidParameterError(f"r must be a positive integer, got {self.r}")
        if not 0 < self.gamma < 1:
            raise InvalidParameterError(f"gamma must lie in (0, 1), got {self.gamma}")


def goodness_threshold(Q: Cube, R: Cube, gamma: float) -> float:
    return R.side ** (1 - gamma) * Q.side**gamma


def is_good(Q: Cube, lattice: ShiftedDyadicLattice, params: GoodnessParams) -> bool:
    for gen in range(0, Q.gen - params.r + 1):
        R = lattice.ancestor(Q, gen)
        if skeleton_distance(Q, R) < goodness_threshold(Q, R, params.gamma):
            return False
    return True


# -- vectorized evaluation over many coarse grids ---------------------------


def _prefix_offsets(Q: Cube, choices: np.ndarray) -> list[np.ndarray]:
    """Grid offsets of generations 0..g(Q) for lattices containing Q.

    ``choices[:, k]`` is c_k for k < g(Q); finer choices are pinned by Q.
    """
    N, g, d = Q.depth, Q.gen, Q.d
    side = Q.side_units
    base = np.array([c % side for c in Q.corner], dtype=np.int64)
    offs = [None] * (g + 1)
    cur = np.broadcast_to(base, (len(choices), d)).copy()
    offs[g] = cur
    bitw = np.array([1 << i for i in range(d)], dtype=np.int64)
    for k in range(g - 1, -1, -1):
        bits = (choices[:, k, None] & bitw) > 0
        cur = cur + bits * (1 << (N - k - 1))
        offs[k] = cur
    return offs


def _omega_mask(offset0: np.ndarray, N: int) -> np.ndarray:
    full = 1 << N
    return np.all((4 * offset0 <= full) | (4 * offset0 > 3 * full), axis=1)


def _skeleton_dist_units(Q: Cube, R_corner: np.ndarray, s: int) -> np.ndarray:
    q = np.asarray(Q.corner, dtype=np.int64)
    t = Q.side_units
    h = s // 2

    def gap(lo, hi, a0, a1):
        return np.maximum(0, np.maximum(a0 - hi, lo - a1))

    box = gap(q, q + t, R_corner, R_corner + s) ** 2
    total = box.sum(axis=1)
    best = np.full(len(R_corner), np.iinfo(np.int64).max)
    for i in range(Q.d):
        rest = total - box[:, i]
        for plane in (R_corner[:, i], R_corner[:, i] + h, R_corner[:, i] + s):
            best = np.minimum(best, gap(q[i], q[i] + t, plane, plane) ** 2 + rest)
    return np.sqrt(best.astype(float))


def good_mask(Q: Cube, offsets: list[np.ndarray], params: GoodnessParams) -> np.ndarray:
    n = len(offsets[Q.gen])
    good = np.ones(n, dtype=bool)
    scale = float(1 << Q.depth)
    for gen in range(0, Q.gen - params.r + 1):
        s = 1 << (Q.depth - gen)
        off = offsets[gen]
        corner = off + s * np.floor_divide(np.asarray(Q.corner) - off, s)
        dist = _skeleton_dist_units(Q, corner, s) / scale
        good &= dist >= 2.0 ** (-gen * (1 - params.gamma) - Q.gen * params.gamma)
    return good


def _all_prefixes(d: int, g: int) -> np.ndarray:
    return np.array(list(itertools.product(range(1 << d), repeat=g)), dtype=np.int64).reshape(-1, g)


@dataclass(frozen=True)
class BadProbability:
    value: float
    stderr: float
    count: int


def bad_probability(
    Q: Cube,
    params: GoodnessParams,
    mode: str = "exact",
    conditioned: bool = True,
    samples: int = 20000,
    seed: int = 0,
    cap: int = ENUMERATION_CAP,
) -> BadProbability:
    """P(Q is bad | Q in D), over Omega when ``conditioned``."""
    if Q.gen < params.r:
        return BadProbability(0.0, 0.0, 0)
    if mode == "exact":
        if (1 << Q.d) ** Q.gen > cap:
            raise ResourceLimitError("too many coarse grids to enumerate; use mode='montecarlo'")
        choices = _all_prefixes(Q.d, Q.gen)
    elif mode == "montecarlo":
        rng = np.random.default_rng(seed)
        choices = rng.integers(0, 1 << Q.d, size=(samples, Q.gen))
    else:
        raise InvalidParameterError(f"unknown mode {mode!r}")
    offsets = _prefix_offsets(Q, choices)
    keep = _omega_mask(offsets[0], Q.depth) if conditioned else np.ones(len(choices), bool)
    n = int(keep.sum())
    if n == 0:
        raise ConfigurationError(f"{Q} lies in no lattice of the ensemble")
    good = good_mask(Q, offsets, params)[keep]
    p_bad = 1.0 - good.mean()
    stderr = 0.0 if mode == "exact" else math.sqrt(max(p_bad * (1 - p_bad), 0.0) / n)
    return BadProbability(float(p_bad), float(stderr), n)


def default_r(cubes, gamma: float, r_max: int | None = None, mode: str = "exact") -> int:
    """Smallest r with every listed cube having bad probability <= 1/2."""
    cubes = list(cubes)
    depth = cubes[0].depth
    r_max = depth + 1 if r_max is None else r_max
    for r in range(1, r_max + 1):
        params = GoodnessParams(r, gamma)
        if all(bad_probability(Q, params, mode=mode).value <= 0.5 for Q in cubes):
            return r
    return r_max


# -- equalization ----------------------------------------------------------


def xi_value(Q: Cube, seed: int) -> float:
    """Uniform variate tied to (cube, seed); independent across cubes."""
    shift = 4 << Q.depth
    key = [seed, Q.depth, Q.gen, *(c + shift for c in Q.corner)]
    return float(np.random.default_rng(np.random.SeedSequence(key)).random())


def equalized_goodness(
    Q: Cube, lattice: ShiftedDyadicLattice, xi: float, p_good: float, params: GoodnessParams
) -> bool:
    if p_good < 0.5:
        raise ConfigurationError(
            f"P({Q} good) = {p_good:.6g} < 1/2; increase r or gamma",
        )
    return is_good(Q, lattice, params) and xi <= 1.0 / (2.0 * p_good)


class Equalizer:
    """Caches p_Q and turns goodness into really-good weights.

    ``weight`` is the probability, over xi_Q alone, that Q is really good in
    the given lattice; averaging it over the ensemble integrates xi exactly.
    """

    def __init__(self, params: GoodnessParams, conditioned: bool = True, mode: str = "exact",
                 samples: int = 20000):
        self.params = params
        self.conditioned = conditioned
        self.mode = mode
        self.samples = samples
        self._p: dict[Cube, BadProbability] = {}
        self._good: dict[tuple, bool] = {}

    def bad(self, Q: Cube) -> BadProbability:
        if Q not in self._p:
            self._p[Q] = bad_probability(
                Q, self.params, mode=self.mode, conditioned=self.conditioned, samples=self.samples
            )
        return self._p[Q]

    def p_good(self, Q: Cube) -> float:
        b = self.bad(Q)
        p = 1.0 - b.value
        if p - 3 * b.stderr < 0.5:
            raise ConfigurationError(
                f"P({Q} good) = {p:.6g} (stderr {b.stderr:.2g}) is below 1/2; "
                f"r={self.params.r}, gamma={self.params.gamma} cannot be equalized"
            )
        return p

    def is_good(self, Q: Cube, lattice: ShiftedDyadicLattice) -> bool:
        key = (Q, lattice.offsets[: max(Q.gen - self.params.r + 1, 0)])
        if key not in self._good:
            self._good[key] = is_good(Q, lattice, self.params)
        return self._good[key]

    def weight(self, Q: Cube, lattice: ShiftedDyadicLattice) -> float:
        if not self.is_good(Q, lattice):
            return 0.0
        return min(1.0, 1.0 / (2.0 * self.p_good(Q)))

    def really_good(self, Q: Cube, lattice: ShiftedDyadicLattice, seed: int | None = None) -> bool:
        seed = self.params.seed if seed is None else seed
        return equalized_goodness(Q, lattice, xi_value(Q, seed), self.p_good(Q), self.params)


def goodness_scan(cubes, rs, gamma: float, mode: str = "exact", samples: int = 20000) -> list[dict]:
    """Rows (r, gamma, generation, p_bad, stderr) with the worst cube per generation."""
    by_gen: dict[int, list[Cube]] = {}
    for Q in cubes:
        by_gen.setdefault(Q.gen, []).append(Q)
    rows = []
    for r in rs:
        params = GoodnessParams(r, gamma)
        for gen in sorted(by_gen):
            results = [bad_probability(Q, params, mode=mode, samples=samples) for Q in by_gen[gen]]
            worst = max(results, key=lambda b: b.value)
            rows.append(
                {"r": r, "gamma": gamma, "generation": gen, "p_bad": worst.value, "stderr": worst.stderr}
            )
    return rows
