"""Haar functions adapted to an atomic measure on one dyadic lattice.

Functions on the support are plain vectors indexed by atom.  A Haar function
of Q is constant on each child of Q, has zero mu-mean and unit L2(mu) norm;
Q carries one such function per positive-mass child minus one.  They depend
only on the cube and the measure, not on the rest of the lattice, so callers
averaging over many lattices can share a cache between systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .lattice import Cube, ShiftedDyadicLattice
from .measure import DiscreteMeasure


@dataclass(frozen=True, eq=False)
class HaarFunction:
    cube: Cube
    index: int
    coeffs: np.ndarray  # one value per child, lexicographic child order

    @property
    def key(self) -> tuple[Cube, int]:
        return (self.cube, self.index)

    @property
    def children(self) -> list[Cube]:
        return self.cube.children()


def child_slot(Q: Cube, cells: np.ndarray) -> np.ndarray:
    """Lexicographic child index of each finest cell (first coordinate most significant)."""
    half = Q.side_units // 2
    bits = (cells - np.asarray(Q.corner)) >= half
    weights = 1 << np.arange(Q.d - 1, -1, -1)
    return (bits * weights).sum(axis=1)


def gram_schmidt_haar(child_masses: np.ndarray) -> list[np.ndarray]:
    """Orthonormal basis of the mean-zero span of the positive-mass child indicators.

    Seeds are 1_{Q_1}/mu(Q_1) - 1_{Q_j}/mu(Q_j) with Q_1 the first positive
    child; modified Gram-Schmidt is run twice for stability.
    """
    pos = np.flatnonzero(child_masses > 0)
    if len(pos) < 2:
        return []
    mass = child_masses

    def dot(u, v):
        return float(np.sum(mass * u * v))

    basis = []
    first = pos[0]
    for j in pos[1:]:
        v = np.zeros(len(mass))
        v[first] = 1.0 / mass[first]
        v[j] = -1.0 / mass[j]
        for _ in range(2):
            for b in basis:
                v = v - dot(v, b) * b
        v = v / np.sqrt(dot(v, v))
        basis.append(v)
    return basis


@dataclass
class CoefficientVector:
    haar: dict = field(default_factory=dict)  # (Cube, i) -> (f, h_Q^i)
    top: dict = field(default_factory=dict)  # generation-0 cube -> (f, 1_Q/sqrt(mu(Q)))

    def norm(self) -> float:
        vals = list(self.haar.values()) + list(self.top.values())
        return float(np.sqrt(np.sum(np.square(vals)))) if vals else 0.0


class HaarSystem:
    """All Haar functions of one lattice, plus generation-0 normalized indicators."""

    def __init__(self, mu: DiscreteMeasure, lattice: ShiftedDyadicLattice, cache: dict | None = None):
        if mu.is_zero or mu.total_mass <= 0:
            raise InvalidArgumentError("cannot build a Haar system for the zero measure")
        if mu.d != lattice.d:
            raise InvalidArgumentError("measure and lattice dimensions differ")
        self.mu = mu
        self.lattice = lattice
        N = lattice.N
        self.cells = mu.cells(N)
        w = mu.weights
        cell_keys = [tuple(c) for c in self.cells]

        # per generation: the positive-mass cubes and each atom's label among them
        self.cubes_by_gen: list[list[Cube]] = []
        self.labels: list[np.ndarray] = []
        for k in range(N + 1):
            index = {}
            labels = np.empty(mu.n_atoms, dtype=np.int64)
            for a, cell in enumerate(cell_keys):
                Q = lattice.cube_at(k, cell)
                labels[a] = index.setdefault(Q, len(index))
            self.cubes_by_gen.append(list(index))
            self.labels.append(labels)
        self.mass = {}
        for k in range(N + 1):
            sums = np.bincount(self.labels[k], weights=w, minlength=len(self.cubes_by_gen[k]))
            for Q, s in zip(self.cubes_by_gen[k], sums):
                self.mass[Q] = float(s)

        self.functions: list[HaarFunction] = []
        rows = []
        for k in range(N):
            for q, Q in enumerate(self.cubes_by_gen[k]):
                inside = self.labels[k] == q
                slots = child_slot(Q, self.cells[inside])
                if cache is not None and Q in cache:
                    coeff_list = cache[Q]
                else:
                    masses = np.bincount(slots, weights=w[inside], minlength=1 << lattice.d)
                    coeff_list = gram_schmidt_haar(masses)
                    if cache is not None:
                        cache[Q] = coeff_list
                for i, c in enumerate(coeff_list, start=1):
                    self.functions.append(HaarFunction(Q, i, c))
                    vals = np.zeros(mu.n_atoms)
                    vals[inside] = c[slots]
                    rows.append(vals)
        self.matrix = np.array(rows).reshape(len(rows), mu.n_atoms)
        self.index = {h.key: n for n, h in enumerate(self.functions)}

        self.top_cubes = self.cubes_by_gen[0]
        top_rows = []
        for q, Q in enumerate(self.top_cubes):
            vals = np.where(self.labels[0] == q, 1.0 / np.sqrt(self.mass[Q]), 0.0)
            top_rows.append(vals)
        self.top_matrix = np.array(top_rows)

    # -- basic queries -------------------------------------------------

    @property
    def n_functions(self) -> int:
        return len(self.functions)

    @property
    def keys(self) -> list[tuple[Cube, int]]:
        return [h.key for h in self.functions]

    def cubes(self) -> list[Cube]:
        return [Q for gen in self.cubes_by_gen for Q in gen]

    def haar_cubes(self) -> list[Cube]:
        seen = {}
        for h in self.functions:
            seen.setdefault(h.cube, None)
        return list(seen)

    def functions_of(self, Q: Cube) -> list[int]:
        return [n for n, h in enumerate(self.functions) if h.cube == Q]

    def values(self, key) -> np.ndarray:
        return self.matrix[self.index[key]]

    def inner(self, f, g) -> float:
        return float(np.sum(self.mu.weights * np.asarray(f) * np.asarray(g)))

    def norm(self, f) -> float:
        return float(np.sqrt(self.inner(f, f)))

    def indicator(self, Q: Cube) -> np.ndarray:
        return np.all(
            (self.cells >= np.asarray(Q.corner)) & (self.cells < np.asarray(Q.corner) + Q.side_units),
            axis=1,
        ).astype(float)

    def _check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.mu.n_atoms,):
            raise InvalidArgumentError(f"expected {self.mu.n_atoms} atom values, got shape {f.shape}")
        return f

    # -- analysis / synthesis -----------------------------------------

    def coefficients(self, f) -> np.ndarray:
        """Array of (f, h) in the order of ``self.functions``."""
        return self.matrix @ (self.mu.weights * self._check(f))

    def analyze(self, f) -> CoefficientVector:
        f = self._check(f)
        wf = self.mu.weights * f
        haar = dict(zip(self.keys, self.matrix @ wf))
        top = dict(zip(self.top_cubes, self.top_matrix @ wf))
        return CoefficientVector(haar, top)

    def synthesize(self, coeffs: CoefficientVector) -> np.ndarray:
        out = np.zeros(self.mu.n_atoms)
        for key, c in coeffs.haar.items():
            if key not in self.index:
                raise InvalidArgumentError(f"unknown Haar key {key}")
            out += c * self.matrix[self.index[key]]
        tops = {Q: n for n, Q in enumerate(self.top_cubes)}
        for Q, c in coeffs.top.items():
            if Q not in tops:
                raise InvalidArgumentError(f"unknown top cube {Q}")
            out += c * self.top_matrix[tops[Q]]
        return out

    def expectation(self, f, k: int) -> np.ndarray:
        """E_k f: mu-average over the generation-k cube holding each atom."""
        f = self._check(f)
        lab, w = self.labels[k], self.mu.weights
        num = np.bincount(lab, weights=w * f)
        den = np.bincount(lab, weights=w)
        return (num / den)[lab]

    def average(self, f, Q: Cube) -> float:
        ind = self.indicator(Q)
        mass = self.inner(ind, np.ones_like(ind))
        return self.inner(f, ind) / mass

    def delta_projection(self, f, Q: Cube, method: str = "haar") -> np.ndarray:
        f = self._check(f)
        if method == "haar":
            out = np.zeros(self.mu.n_atoms)
            for n in self.functions_of(Q):
                h = self.matrix[n]
                out += self.inner(f, h) * h
            return out
        if method == "expectation":
            if Q.gen >= self.lattice.N:
                return np.zeros(self.mu.n_atoms)
            diff = self.expectation(f, Q.gen + 1) - self.expectation(f, Q.gen)
            return diff * self.indicator(Q)
        raise InvalidArgumentError(f"unknown method {method!r}")

    def gram(self) -> np.ndarray:
        full = np.vstack([self.matrix, self.top_matrix])
        return (full * self.mu.weights) @ full.T

    # -- golden-file dump ----------------------------------------------

    def dump(self, coeffs: CoefficientVector) -> str:
        rows = []
        for (Q, i), v in coeffs.haar.items():
            rows.append((Q.gen, self.lattice.index_vector(Q), i, v))
        rows.sort(key=lambda r: r[:3])
        return "".join(
            f"{g} {' '.join(map(str, idx))} {i} {v:.17g}\n" for g, idx, i, v in rows
        )


def build_haar_system(mu: DiscreteMeasure, lattice: ShiftedDyadicLattice, cache: dict | None = None) -> HaarSystem:
    return HaarSystem(mu, lattice, cache)
