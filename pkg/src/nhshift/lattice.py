"""Randomly shifted dyadic lattices and the finite probability space they form.

All lattices share the finest grid D_N of side 2^-N anchored at the origin.
Coordinates are kept as integers in units of 2^-N.  Going from generation
k+1 to k, the father grid is the child grid translated by 0 or 2^-(k+1) in
each coordinate; the choice is the bit vector ``c_k`` packed into an integer
(bit i drives coordinate i).

Grids are never materialized: the cube of a given generation that holds a
point is computed from the grid offset on demand, which covers every cube the
measure can see.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgumentError, InvalidParameterError, ResourceLimitError

ENUMERATION_CAP = 1 << 16


@dataclass(frozen=True, order=True)
class Cube:
    """Half-open dyadic cube of generation ``gen``; ``corner`` is in units of 2^-depth."""

    gen: int
    corner: tuple[int, ...]
    depth: int

    @property
    def d(self) -> int:
        return len(self.corner)

    @property
    def side_units(self) -> int:
        return 1 << (self.depth - self.gen)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.gen)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.corner, dtype=float) / (1 << self.depth)

    @property
    def center(self) -> np.ndarray:
        return self.lower + self.side / 2

    def children(self) -> list[Cube]:
        """The 2^d children in lexicographic order of their offset bits."""
        if self.gen >= self.depth:
            raise InvalidArgumentError(f"{self} is at the finest generation")
        half = self.side_units // 2
        return [
            Cube(self.gen + 1, tuple(c + half * b for c, b in zip(self.corner, bits)), self.depth)
            for bits in itertools.product((0, 1), repeat=self.d)
        ]

    def contains(self, other: Cube) -> bool:
        if other.gen < self.gen:
            return False
        s, t = self.side_units, other.side_units
        return all(a <= b and b + t <= a + s for a, b in zip(self.corner, other.corner))

    def intersects(self, other: Cube) -> bool:
        s, t = self.side_units, other.side_units
        return all(a < b + t and b < a + s for a, b in zip(self.corner, other.corner))

    def contains_cell(self, cell) -> bool:
        s = self.side_units
        return all(a <= c < a + s for a, c in zip(self.corner, cell))

    def __str__(self):
        return f"Cube(g={self.gen}, corner={self.corner}/2^{self.depth})"


def bits_of(choice: int, d: int) -> tuple[int, ...]:
    return tuple((choice >> i) & 1 for i in range(d))


def _interval_gap(a0, a1, b0, b1):
    return max(0, b0 - a1, a0 - b1)


def skeleton_distance(Q: Cube, R: Cube) -> float:
    """Euclidean distance from the closed cube Q to the union of the boundaries of R's children.

    The skeleton is a union of axis-parallel facets, so the distance is a
    minimum of box-to-box distances.  Exact up to one square root.
    """
    if Q.depth != R.depth or Q.d != R.d:
        raise InvalidArgumentError("cubes come from grids of different resolution")
    if Q.gen < R.gen:
        raise InvalidArgumentError("skeleton distance needs g(Q) >= g(R)")
    if R.gen >= R.depth:
        raise InvalidArgumentError("finest-generation cubes have no children")
    s, h, t = R.side_units, R.side_units // 2, Q.side_units
    box_gaps = [
        _interval_gap(q, q + t, a, a + s) ** 2 for q, a in zip(Q.corner, R.corner)
    ]
    total_box = sum(box_gaps)
    best = None
    for i, (q, a) in enumerate(zip(Q.corner, R.corner)):
        rest = total_box - box_gaps[i]
        for plane in (a, a + h, a + s):
            gap = _interval_gap(q, q + t, plane, plane) ** 2 + rest
            best = gap if best is None else min(best, gap)
    return math.sqrt(best) / (1 << Q.depth)


@dataclass(frozen=True)
class ShiftedDyadicLattice:
    """One realization: ``choices`` lists c_{N-1}, ..., c_0 (most refined first)."""

    d: int
    N: int
    choices: tuple[int, ...]

    def __post_init__(self):
        if self.d < 1 or self.N < 0:
            raise InvalidParameterError("need d >= 1 and N >= 0")
        if len(self.choices) != self.N:
            raise InvalidArgumentError(f"expected {self.N} father choices, got {len(self.choices)}")
        if any(not 0 <= c < (1 << self.d) for c in self.choices):
            raise InvalidArgumentError("father choices must lie in 0 .. 2^d - 1")

    def choice(self, k: int) -> int:
        """Father choice used to pass from generation k+1 to k."""
        return self.choices[self.N - 1 - k]

    @cached_property
    def offsets(self) -> tuple[tuple[int, ...], ...]:
        """Grid origin of every generation 0..N, in units of 2^-N."""
        out = [None] * (self.N + 1)
        cur = (0,) * self.d
        out[self.N] = cur
        for k in range(self.N - 1, -1, -1):
            step = 1 << (self.N - k - 1)
            cur = tuple(o + step * b for o, b in zip(cur, bits_of(self.choice(k), self.d)))
            out[k] = cur
        return tuple(out)

    def cube_at(self, gen: int, cell) -> Cube:
        """Generation-``gen`` cube of this lattice holding the finest cell ``cell``."""
        side = 1 << (self.N - gen)
        off = self.offsets[gen]
        corner = tuple(int(o + side * ((c - o) // side)) for o, c in zip(off, cell))
        return Cube(gen, corner, self.N)

    def contains(self, Q: Cube) -> bool:
        if Q.depth != self.N or Q.d != self.d or not 0 <= Q.gen <= self.N:
            return False
        side = Q.side_units
        return all((c - o) % side == 0 for c, o in zip(Q.corner, self.offsets[Q.gen]))

    def father(self, Q: Cube) -> Cube:
        if Q.gen == 0:
            raise InvalidArgumentError("generation-0 cubes have no father in the truncated lattice")
        return self.cube_at(Q.gen - 1, Q.corner)

    def ancestor(self, Q: Cube, gen: int) -> Cube:
        if gen > Q.gen:
            raise InvalidArgumentError("ancestor generation must not exceed g(Q)")
        return self.cube_at(gen, Q.corner)

    def index_vector(self, Q: Cube) -> tuple[int, ...]:
        side = Q.side_units
        return tuple((c - o) // side for c, o in zip(Q.corner, self.offsets[Q.gen]))

    def in_omega(self) -> bool:
        """True if some generation-0 cube contains the closed cube [1/4, 3/4]^d."""
        full = 1 << self.N
        return all(4 * o <= full or 4 * o > 3 * full for o in self.offsets[0])

    def skeleton_distance(self, Q: Cube, R: Cube) -> float:
        if not (self.contains(Q) and self.contains(R)):
            raise InvalidArgumentError("both cubes must belong to this lattice")
        return skeleton_distance(Q, R)

    def serialize(self) -> str:
        return " ".join(map(str, (self.d, self.N, *self.choices)))

    @classmethod
    def parse(cls, line: str) -> ShiftedDyadicLattice:
        toks = [int(t) for t in line.split()]
        if len(toks) < 2:
            raise InvalidArgumentError(f"bad lattice record {line!r}")
        return cls(toks[0], toks[1], tuple(toks[2:]))


@dataclass(frozen=True)
class LatticeEnsemble:
    members: tuple[ShiftedDyadicLattice, ...]
    weights: np.ndarray
    conditioned: bool

    @property
    def M(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(zip(self.members, self.weights))

    def __len__(self):
        return len(self.members)


def enumerate_ensemble(
    d: int, N: int, conditioned: bool = True, cap: int = ENUMERATION_CAP
) -> LatticeEnsemble:
    """Every father-choice sequence once, equally weighted; optionally restricted to Omega."""
    size = (1 << d) ** N
    if size > cap:
        raise ResourceLimitError(f"(2^{d})^{N} = {size} lattices exceeds the cap {cap}; sample instead")
    members = [
        ShiftedDyadicLattice(d, N, tuple(ch))
        for ch in itertools.product(range(1 << d), repeat=N)
    ]
    if conditioned:
        members = [lat for lat in members if lat.in_omega()]
    weights = np.full(len(members), 1.0 / len(members))
    return LatticeEnsemble(tuple(members), weights, conditioned)


def sample_choices(d: int, N: int, size: int, rng) -> np.ndarray:
    return rng.integers(0, 1 << d, size=(size, N))


def sample_lattice(d: int, N: int, seed, conditioned: bool = False) -> ShiftedDyadicLattice:
    """Independent uniform father choices; with ``conditioned`` resample until in Omega."""
    if N < 0:
        raise InvalidParameterError("N must be nonnegative")
    rng = np.random.default_rng(seed)
    while True:
        lat = ShiftedDyadicLattice(d, N, tuple(int(c) for c in sample_choices(d, N, 1, rng)[0]))
        if not conditioned or lat.in_omega():
            return lat


def sample_ensemble(d: int, N: int, count: int, seed) -> LatticeEnsemble:
    """Monte Carlo stand-in for Omega: ``count`` conditioned draws, equally weighted."""
    rng = np.random.default_rng(seed)
    members = []
    while len(members) < count:
        for row in sample_choices(d, N, 2 * count, rng):
            lat = ShiftedDyadicLattice(d, N, tuple(int(c) for c in row))
            if lat.in_omega():
                members.append(lat)
                if len(members) == count:
                    break
    return LatticeEnsemble(tuple(members), np.full(count, 1.0 / count), True)
