"""Finite atomic measures in the unit cube with a power growth bound.

Atoms live in the closed central cube [1/4, 3/4]^d.  Cube membership uses the
half-open convention [a, b) in every coordinate, so each atom sits in exactly
one cube of every dyadic generation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, InvalidParameterError, ResourceLimitError

MAX_ATOMS = 1 << 14


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray
    m: float
    r_min: float = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        w = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] != w.shape[0]:
            raise InvalidArgumentError("points and weights have different lengths")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidParameterError("weights must be finite and nonnegative")
        if self.m <= 0:
            raise InvalidParameterError(f"growth order must be positive, got {self.m}")
        if np.any(pts < 0.25) or np.any(pts > 0.75):
            raise InvalidArgumentError("atoms must lie in the closed cube [1/4, 3/4]^d")
        keep = w > 0
        pts, w = pts[keep], w[keep]
        if len(np.unique(pts, axis=0)) != len(pts):
            raise InvalidArgumentError("atom points must be pairwise distinct")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        r_min = self.r_min
        if r_min is None:
            r_min = 0.5 * min_pairwise_distance(pts) if len(pts) > 1 else 0.5
        if r_min <= 0:
            raise InvalidParameterError("r_min must be positive")
        object.__setattr__(self, "r_min", float(r_min))

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def is_zero(self) -> bool:
        return self.n_atoms == 0

    def cells(self, N: int) -> np.ndarray:
        """Integer coordinates of the generation-N grid cell holding each atom."""
        # multiplying by a power of two is exact, so floor is exact too
        return np.floor(self.points * (1 << N)).astype(np.int64)

    def scaled(self, factor: float) -> DiscreteMeasure:
        return DiscreteMeasure(self.points, self.weights * factor, self.m, self.r_min)


def min_pairwise_distance(points: np.ndarray) -> float:
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    return float(dist.min())


def uniform_grid_measure(d: int, N: int, m: float, weights=None) -> DiscreteMeasure:
    """One atom at the centre of every generation-N cell inside [1/4, 3/4]^d."""
    if N < 2:
        raise InvalidParameterError("need N >= 2 for cells inside the central cube")
    side = 1.0 / (1 << N)
    lo = 1 << (N - 2)
    ticks = (np.arange(lo, 3 * lo) + 0.5) * side
    pts = np.array(list(itertools.product(ticks, repeat=d)))
    if weights is None:
        weights = np.full(len(pts), 1.0 / len(pts))
    return DiscreteMeasure(pts, weights, m)


def random_measure(d: int, N: int, m: float, rng, fill: float = 0.7) -> DiscreteMeasure:
    """Random weights on a random subset of generation-N cell centres."""
    base = uniform_grid_measure(d, N, m)
    while True:
        keep = rng.random(base.n_atoms) < fill
        if keep.sum() >= 2:
            break
    w = rng.exponential(size=base.n_atoms) * keep
    return DiscreteMeasure(base.points, w / w.sum(), m)


def _cantor_ticks(depth: int, contraction: float) -> np.ndarray:
    """Centres of the depth-level intervals of the two-piece Cantor construction on [1/4, 3/4]."""
    intervals = [(0.25, 0.75)]
    for _ in range(depth):
        nxt = []
        for a, b in intervals:
            length = contraction * (b - a)
            nxt.append((a, a + length))
            nxt.append((b - length, b))
        intervals = nxt
    return np.array([(a + b) / 2 for a, b in intervals])


def make_cantor_measure(
    d: int, m: float, depth: int, contraction: float, total_mass: float | None = None
) -> DiscreteMeasure:
    """Equal-weight atoms at the depth-level points of a product Cantor set.

    With ``total_mass=None`` the mass is scaled so that ``growth_constant`` is
    exactly 1 for the requested order ``m``.
    """
    if not 0 < contraction < 0.5:
        raise InvalidParameterError(f"contraction must lie in (0, 1/2), got {contraction}")
    if depth < 0:
        raise InvalidParameterError("depth must be nonnegative")
    if m <= 0:
        raise InvalidParameterError("growth order must be positive")
    similarity_dim = d * math.log(2) / math.log(1 / contraction)
    if similarity_dim > m + 1e-12:
        raise InvalidParameterError(
            f"self-similar dimension {similarity_dim:.4g} exceeds growth order {m}"
        )
    count = 2 ** (d * depth)
    if count > MAX_ATOMS:
        raise ResourceLimitError(f"{count} atoms exceeds the cap of {MAX_ATOMS}")
    ticks = _cantor_ticks(depth, contraction)
    pts = np.array(list(itertools.product(ticks, repeat=d)))
    unit = DiscreteMeasure(pts, np.full(count, 1.0 / count), m)
    if total_mass is None:
        total_mass = 1.0 / growth_constant(unit, m)
    return unit.scaled(total_mass)


def growth_constant(mu: DiscreteMeasure, m: float | None = None) -> float:
    """sup of mu(B(x, r)) / r^m over atom centres x and radii r >= r_min.

    Balls are open.  Between consecutive atom distances the ratio decreases in
    r, so the supremum is reached either at r = r_min or just above an atom
    distance, where the open ball has picked up every atom at that distance.
    Centres are restricted to atoms; any ball meeting the support sits inside
    an atom-centred ball of twice the radius, so the unrestricted constant is
    at most 2^m times this one.
    """
    if m is None:
        m = mu.m
    if m <= 0:
        raise InvalidParameterError(f"growth order must be positive, got {m}")
    if mu.is_zero:
        return 0.0
    pts, w, r_min = mu.points, mu.weights, mu.r_min
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    best = 0.0
    for a in range(len(pts)):
        order = np.argsort(dist[a], kind="stable")
        ds = dist[a][order]
        cum = np.cumsum(w[order])
        open_at_rmin = cum[np.searchsorted(ds, r_min, side="left") - 1]
        best = max(best, open_at_rmin / r_min**m)
        cand = ds >= r_min
        if np.any(cand):
            radii = ds[cand]
            closed = cum[np.searchsorted(ds, radii, side="right") - 1]
            best = max(best, float(np.max(closed / radii**m)))
    return float(best)


def cube_mass(mu: DiscreteMeasure, Q) -> float:
    """mu(Q) for a half-open dyadic cube ``Q``."""
    return float(mu.weights[atoms_in_cube(mu, Q)].sum())


def atoms_in_cube(mu: DiscreteMeasure, Q) -> np.ndarray:
    cells = mu.cells(Q.depth)
    corner = np.asarray(Q.corner)
    return np.all((cells >= corner) & (cells < corner + Q.side_units), axis=1)


def write_measure(mu: DiscreteMeasure, path) -> None:
    lines = [f"dim={mu.d} m={mu.m!r}"]
    for x, w in zip(mu.points, mu.weights):
        lines.append(" ".join(f"{v:.17g}" for v in (*x, w)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_measure(path) -> DiscreteMeasure:
    text = Path(path).read_text().splitlines()
    if not text:
        raise InvalidArgumentError(f"{path}: empty measure file")
    header = dict(tok.split("=", 1) for tok in text[0].split())
    try:
        d, m = int(header["dim"]), float(header["m"])
    except (KeyError, ValueError) as exc:
        raise InvalidArgumentError(f"{path}: bad header {text[0]!r}") from exc
    rows = [list(map(float, ln.split())) for ln in text[1:] if ln.strip()]
    if any(len(r) != d + 1 for r in rows):
        raise InvalidArgumentError(f"{path}: every record needs {d} coordinates and a weight")
    arr = np.array(rows, dtype=float).reshape(-1, d + 1)
    return DiscreteMeasure(arr[:, :d], arr[:, d], m)
