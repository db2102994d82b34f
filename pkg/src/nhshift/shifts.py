"""Dyadic shifts and generalized shifts (paraproducts) on a measure-adapted Haar system.

A shift block anchored at L sends Haar functions of cubes inside L to Haar
functions of cubes inside L:

    S f = sum_L sum c[(Q, i), (R, j)] (f, h_R^j) h_Q^i,

with Q the output cube and R the input cube.  Complexity (m, n) means
g(Q) = g(L) + m and g(R) = g(L) + n.  Order-n blocks may mix every pair of
depths 0..n below L.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidParameterError, ValidationError
from .haar import HaarSystem
from .lattice import Cube

NORMALIZATION_TOL = 1e-12


@dataclass
class ShiftBlock:
    anchor: Cube
    coeffs: dict  # ((Q, i), (R, j)) -> value, Q output, R input
    complexity: tuple[int, int] | None = None

    def sum_squares(self) -> float:
        return float(sum(v * v for v in self.coeffs.values()))


@dataclass
class DyadicShift:
    blocks: list[ShiftBlock]
    system: HaarSystem
    mode: str = "complexity"
    order: int | None = None
    _matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def coefficient_matrix(self) -> np.ndarray:
        """C[q, r] = coefficient sending h_r to h_q, in the system's function order."""
        if self._matrix is None:
            n = self.system.n_functions
            C = np.zeros((n, n))
            idx = self.system.index
            for block in self.blocks:
                for (out_key, in_key), v in block.coeffs.items():
                    C[idx[out_key], idx[in_key]] += v
            self._matrix = C
        return self._matrix


def _check_block_geometry(block: ShiftBlock, system: HaarSystem, mode: str, order: int | None):
    L = block.anchor
    for out_key, in_key in block.coeffs:
        for key in (out_key, in_key):
            if key not in system.index:
                raise InvalidArgumentError(f"{key} is not a Haar function of the system")
            if not L.contains(key[0]):
                raise InvalidArgumentError(f"{key[0]} is not inside the anchor {L}")
        gaps = (out_key[0].gen - L.gen, in_key[0].gen - L.gen)
        if mode == "complexity":
            if block.complexity is None or gaps != tuple(block.complexity):
                raise InvalidArgumentError(
                    f"pair at depths {gaps} below {L} does not match complexity {block.complexity}"
                )
        elif max(gaps) > order:
            raise InvalidArgumentError(f"pair at depths {gaps} below {L} exceeds order {order}")


def make_shift(blocks, system: HaarSystem, mode: str = "complexity", order: int | None = None,
               tol: float = NORMALIZATION_TOL) -> DyadicShift:
    """Validate block geometry and the per-block normalization sum |c|^2 <= 1."""
    if mode not in ("complexity", "order"):
        raise InvalidParameterError(f"unknown shift mode {mode!r}")
    if mode == "order" and (order is None or order < 0):
        raise InvalidParameterError("order mode needs a nonnegative order")
    blocks = list(blocks)
    anchors = set()
    for block in blocks:
        if block.anchor in anchors:
            raise InvalidArgumentError(f"two blocks share the anchor {block.anchor}")
        anchors.add(block.anchor)
        _check_block_geometry(block, system, mode, order)
        total = block.sum_squares()
        if total > 1 + tol:
            raise ValidationError(
                f"block at {block.anchor} has sum |c|^2 = {total:.12g} > 1",
                where=block.anchor,
                value=total,
            )
    return DyadicShift(blocks, system, mode, order)


def block_from_kernel(anchor: Cube, kernel: np.ndarray, system: HaarSystem,
                      complexity: tuple[int, int], tol: float = NORMALIZATION_TOL) -> ShiftBlock:
    """Haar-tensor expansion of a local kernel a_L(x, y) given on atom pairs.

    Requires |a_L| <= 1/mu(L) on L x L and zero elsewhere, which forces
    sum |c|^2 <= int int |a_L|^2 <= 1.
    """
    w = system.mu.weights
    ind = system.indicator(anchor).astype(bool)
    mass = float(w[ind].sum())
    a = np.asarray(kernel, dtype=float)
    if np.any(np.abs(a[np.ix_(ind, ind)]) > (1 + tol) / mass):
        raise ValidationError(f"kernel exceeds 1/mu(L) on {anchor}", where=anchor)
    if np.any(a[~ind, :] != 0) or np.any(a[:, ~ind] != 0):
        raise InvalidArgumentError(f"kernel is not supported on {anchor} x {anchor}")
    m, n = complexity
    out_keys = [h.key for h in system.functions if h.cube.gen == anchor.gen + m and anchor.contains(h.cube)]
    in_keys = [h.key for h in system.functions if h.cube.gen == anchor.gen + n and anchor.contains(h.cube)]
    coeffs = {}
    for ok in out_keys:
        hq = system.values(ok) * w
        for ik in in_keys:
            coeffs[(ok, ik)] = float(hq @ a @ (system.values(ik) * w))
    return ShiftBlock(anchor, coeffs, complexity)


def apply_shift(S: DyadicShift, f) -> np.ndarray:
    coeffs = S.system.coefficients(f)
    return S.system.matrix.T @ (S.coefficient_matrix @ coeffs)


def spectral_norm(M: np.ndarray, method: str = "dense", tol: float = 1e-10,
                  max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest singular value, by SVD or by power iteration on M^T M."""
    if M.size == 0 or not np.any(M):
        return 0.0
    if method == "dense":
        return float(np.linalg.norm(M, 2))
    if method != "power":
        raise InvalidParameterError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    G = M.T @ M
    v = rng.standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        u = G @ v
        lam = float(v @ u)
        # stop on the eigen-residual, which stays honest when the top values nearly tie
        if np.linalg.norm(u - lam * v) <= tol * max(lam, 1e-300):
            break
        nu = np.linalg.norm(u)
        if nu == 0.0:
            # start landed in the kernel; restart away from it
            v = rng.standard_normal(G.shape[0])
            v /= np.linalg.norm(v)
            continue
        v = u / nu
    return float(np.sqrt(max(lam, 0.0)))


def shift_norm(S: DyadicShift, method: str = "dense") -> float:
    """Operator norm on L2(mu); Haar functions are orthonormal so the coefficient matrix has it."""
    return spectral_norm(S.coefficient_matrix, method)


def shift_bilinear(S: DyadicShift, f, g) -> float:
    a = S.system.coefficients(f)
    b = S.system.coefficients(g)
    return float(b @ S.coefficient_matrix @ a)


# -- paraproducts -------------------------------------------------------------


@dataclass
class Paraproduct:
    """Pi f = sum_L <f>_L sqrt(mu(L)) sum_{l, j} c[L, (l, j)] h_l^j, l at depth s below L."""

    coeffs: dict  # (L, (l, j)) -> value
    s: int
    system: HaarSystem
    carleson_ratio: float = 0.0
    worst_cube: Cube | None = None

    def matrix(self) -> np.ndarray:
        """Action on atom values: Pi f = P @ f."""
        sys = self.system
        w = sys.mu.weights
        n = sys.mu.n_atoms
        P = np.zeros((n, n))
        by_anchor = defaultdict(lambda: np.zeros(n))
        for (L, key), c in self.coeffs.items():
            by_anchor[L] += c * sys.values(key)
        for L, out in by_anchor.items():
            ind = sys.indicator(L)
            mass = float(np.sum(w * ind))
            P += np.outer(out, ind * w) * (np.sqrt(mass) / mass)
        return P

    def apply(self, f) -> np.ndarray:
        return self.matrix() @ np.asarray(f, dtype=float)

    def norm(self) -> float:
        s = np.sqrt(self.system.mu.weights)
        return spectral_norm(s[:, None] * self.matrix() / s[None, :])


def carleson_sums(coeffs: dict, system: HaarSystem) -> tuple[dict, dict]:
    """Per cube R: sum over L inside R of mu(L) sum |c_L|^2, by one bottom-up pass."""
    own = defaultdict(float)
    for (L, _), c in coeffs.items():
        own[L] += c * c
    lattice = system.lattice
    total = {}
    for k in range(lattice.N, -1, -1):
        for R in system.cubes_by_gen[k]:
            total[R] = total.get(R, 0.0) + system.mass[R] * own.get(R, 0.0)
            if k > 0:
                F = lattice.father(R)
                total[F] = total.get(F, 0.0) + total[R]
    return total, {R: system.mass[R] for R in total}


def make_paraproduct(coeffs: dict, s: int, system: HaarSystem, tol: float = NORMALIZATION_TOL,
                     validate: bool = True) -> Paraproduct:
    for (L, key) in coeffs:
        if key not in system.index:
            raise InvalidArgumentError(f"{key} is not a Haar function of the system")
        ell = key[0]
        if not L.contains(ell) or ell.gen != L.gen + s:
            raise InvalidArgumentError(f"{ell} is not at depth {s} inside {L}")
        if L not in system.mass:
            raise InvalidArgumentError(f"{L} carries no mass in this system")
    totals, masses = carleson_sums(coeffs, system)
    worst, ratio = None, 0.0
    for R, t in totals.items():
        if masses[R] > 0 and t / masses[R] > ratio:
            worst, ratio = R, t / masses[R]
    if validate and ratio > 1 + tol:
        raise ValidationError(
            f"Carleson condition fails at {worst}: ratio {ratio:.12g}", where=worst, value=ratio
        )
    return Paraproduct(dict(coeffs), s, system, ratio, worst)


# -- text serialization ---------------------------------------------------------


def cube_address(Q: Cube) -> str:
    return f"{Q.gen}:{','.join(map(str, Q.corner))}"


def parse_address(text: str, depth: int) -> Cube:
    gen, corner = text.split(":")
    return Cube(int(gen), tuple(int(c) for c in corner.split(",")), depth)


def serialize_shift(S: DyadicShift) -> str:
    lines = []
    for block in S.blocks:
        m, n = block.complexity if block.complexity is not None else (S.order, S.order)
        lines.append(f"{cube_address(block.anchor)} {m} {n}")
        for ((Q, i), (R, j)), v in sorted(block.coeffs.items()):
            lines.append(f"  {cube_address(Q)} {i} {cube_address(R)} {j} {v:.17g}")
    return "\n".join(lines) + "\n"


def parse_shift(text: str, system: HaarSystem, mode: str = "complexity", order=None) -> DyadicShift:
    depth = system.lattice.N
    blocks = []
    for ln in text.splitlines():
        if not ln.strip():
            continue
        toks = ln.split()
        if not ln.startswith(" "):
            anchor = parse_address(toks[0], depth)
            blocks.append(ShiftBlock(anchor, {}, (int(toks[1]), int(toks[2]))))
        else:
            Q, i, R, j, v = toks
            key = ((parse_address(Q, depth), int(i)), (parse_address(R, depth), int(j)))
            blocks[-1].coeffs[key] = float(v)
    if mode == "order":
        for b in blocks:
            b.complexity = None
    return make_shift(blocks, system, mode, order)
