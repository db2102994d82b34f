"""Rearranging the good-pair bilinear form of an operator into dyadic shifts and paraproducts.

For one lattice, with Haar coefficients a = (f, h_Q), b = (g, h_R) and
B[R, Q] = (T h_Q, h_R), the forward triangular sum

    sum over l(Q) <= l(R) of w_Q B a b        (w_Q = goodness weight of Q)

splits by the relative position of Q and R:

* diagonal, Q = R: a complexity (0, 0) shift anchored at Q;
* near, Q inside R with scale gap s < r: complexity (0, s) shifts anchored at R;
* inner, Q inside R with gap n >= r: B = <h_R>_S (h_Q, T*1) + t1 + t2 where S is
  the child of R holding Q.  t1 and t2 give complexity (0, n) shifts; the
  first term, summed over all inner pairs, is the paraproduct pi;
* outer, Q and R disjoint: complexity (s, t) shifts anchored at L(Q, R).

The other triangle (l(R) < l(Q), R good) is the same computation for the
adjoint operator with f and g exchanged.  Every piece is stored as a
normalized shift times a decay factor times a fitted constant, so evaluating
the ledger reproduces the good-pair form up to rounding.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .czop import OperatorMatrix, haar_matrix
from .errors import ConfigurationError, InvalidArgumentError
from .haar import HaarSystem
from .lattice import Cube, LatticeEnsemble, ShiftedDyadicLattice
from .shifts import (
    Paraproduct,
    ShiftBlock,
    make_paraproduct,
    make_shift,
    shift_bilinear,
)

# -- pair geometry -------------------------------------------------------------


def cube_distance(Q: Cube, R: Cube) -> float:
    t, s = Q.side_units, R.side_units
    gaps = [max(0, b - (a + t), a - (b + s)) for a, b in zip(Q.corner, R.corner)]
    return math.sqrt(sum(g * g for g in gaps)) / (1 << Q.depth)


def pair_scale(Q: Cube, R: Cube) -> float:
    """D(Q, R) = l(Q) + dist(Q, R) + l(R)."""
    return Q.side + cube_distance(Q, R) + R.side


def outer_anchor_generation(D: float) -> tuple[int, bool]:
    """Generation k with 2^-k in (2D, 4D], clamped at 0; returns (k, clamped)."""
    k = math.floor(-math.log2(2 * D))
    while 2.0 ** (-k) <= 2 * D:
        k -= 1
    while 2.0 ** (-k) > 4 * D:
        k += 1
    return (0, True) if k < 0 else (k, False)


@dataclass(frozen=True)
class PairClass:
    tag: str  # "diagonal" | "near" | "inner" | "outer"
    gap: int
    son: Cube | None = None
    D: float | None = None
    anchor_gen: int | None = None
    clamped: bool = False


def classify_pair(Q: Cube, R: Cube, lattice: ShiftedDyadicLattice, r: int) -> PairClass:
    """Tag a pair with l(Q) <= l(R)."""
    if Q.gen < R.gen:
        raise InvalidArgumentError("classify_pair expects l(Q) <= l(R)")
    gap = Q.gen - R.gen
    if Q == R:
        return PairClass("diagonal", 0)
    if R.contains(Q):
        son = lattice.ancestor(Q, R.gen + 1)
        return PairClass("near" if gap < r else "inner", gap, son)
    D = pair_scale(Q, R)
    k, clamped = outer_anchor_generation(D)
    return PairClass("outer", gap, None, D, k, clamped)


def outer_anchor(Q: Cube, R: Cube, lattice: ShiftedDyadicLattice, pc: PairClass) -> tuple[Cube, bool]:
    """L(Q, R) in this lattice and whether Q lies in it too (a 'nice' lattice for the pair)."""
    L = lattice.ancestor(R, pc.anchor_gen)
    return L, L.contains(Q)


def common_ancestor(Q: Cube, R: Cube, lattice: ShiftedDyadicLattice) -> Cube:
    for gen in range(min(Q.gen, R.gen), -1, -1):
        A = lattice.ancestor(R, gen)
        if A.contains(Q):
            return A
    raise ConfigurationError(f"{Q} and {R} lie in different generation-0 cubes")


# -- inner pairs -----------------------------------------------------------------


@dataclass(frozen=True)
class InnerSplit:
    para: float
    t1: float
    t2: float
    element: float
    bound_t1: float
    bound_t2: float

    @property
    def total(self) -> float:
        return self.para + self.t1 + self.t2


def inner_split(T: OperatorMatrix, system: HaarSystem, key_q, key_r, epsilon: float = 1.0,
                gamma: float = 0.25, tstar_one: np.ndarray | None = None) -> InnerSplit:
    """Split (T h_Q, h_R) for Q strictly inside R through the child S of R holding Q.

    h_R = <h_R>_S 1 + h_R 1_{R minus S} - <h_R>_S (1 - 1_S) gives
    para = <h_R>_S (h_Q, T*1), t1 = (T h_Q, h_R 1_{R minus S}),
    t2 = -<h_R>_S (T h_Q, 1 - 1_S).
    """
    Q, R = key_q[0], key_r[0]
    if not (R.contains(Q) and Q != R):
        raise InvalidArgumentError("inner_split needs Q strictly inside R")
    S = system.lattice.ancestor(Q, R.gen + 1)
    w = system.mu.weights
    in_S = system.indicator(S)
    mass_S = float(np.sum(w * in_S))
    if mass_S <= 0:
        raise InvalidArgumentError(f"degenerate pair: the son {S} has zero mass")
    hq, hr = system.values(key_q), system.values(key_r)
    avg = float(np.sum(w * hr * in_S)) / mass_S
    if tstar_one is None:
        tstar_one = T.adjoint().apply(np.ones(len(w)))
    Thq = T.matrix @ hq
    para = avg * float(np.sum(w * hq * tstar_one))
    in_R = system.indicator(R)
    t1 = float(np.sum(w * Thq * hr * (in_R - in_S)))
    t2 = -avg * float(np.sum(w * Thq * (1.0 - in_S)))
    element = float(np.sum(w * hr * Thq))
    mu_q, mu_r = system.mass[Q], system.mass[R]
    ratio = Q.side / R.side
    b1 = math.sqrt(mu_q / mu_r) * ratio ** (epsilon / 2)
    b2 = math.sqrt(mu_q / mass_S) * ratio ** (1 - epsilon * gamma)
    return InnerSplit(para, t1, t2, element, b1, b2)


# -- goodness weights -------------------------------------------------------------


def indicator_weights(system: HaarSystem, equalizer) -> dict:
    return {Q: float(equalizer.is_good(Q, system.lattice)) for Q in system.cubes()}


def really_good_weights(system: HaarSystem, equalizer) -> dict:
    """xi-integrated really-good probability of every cube in this lattice."""
    return {Q: equalizer.weight(Q, system.lattice) for Q in system.cubes()}


def good_pair_form(T: OperatorMatrix, system: HaarSystem, weights: dict, f, g) -> float:
    """Direct double sum over pairs with the smaller cube weighted (Q on ties)."""
    B = haar_matrix(T, system)
    a = system.coefficients(f)
    b = system.coefficients(g)
    gens = np.array([h.cube.gen for h in system.functions])
    wq = np.array([weights[h.cube] for h in system.functions])
    # pair (row = R-function, col = Q-function)
    q_smaller = gens[None, :] >= gens[:, None]
    pair_w = np.where(q_smaller, wq[None, :], wq[:, None])
    return float(b @ (B * pair_w) @ a)


# -- the paraproduct pi ------------------------------------------------------------


def build_pi(T: OperatorMatrix, system: HaarSystem, weights: dict, r: int,
             validate: bool = False) -> Paraproduct:
    """pi g = sum_L <g>_L sum_{Q at depth r-1 in L} w_Q Delta_Q T*1, as a generalized shift.

    Coefficients are c[L, (Q, j)] = w_Q (h_Q^j, T*1) / sqrt(mu(L)); the
    Carleson ratio of these raw coefficients is the squared constant in front
    of the normalized paraproduct.
    """
    lattice = system.lattice
    tstar_one = T.adjoint().apply(np.ones(system.mu.n_atoms))
    coeffs = {}
    for h in system.functions:
        Q = h.cube
        if Q.gen < r or weights[Q] == 0:
            continue
        L = lattice.ancestor(Q, Q.gen - (r - 1))
        c = weights[Q] * system.inner(system.values(h.key), tstar_one)
        coeffs[(L, h.key)] = c / math.sqrt(system.mass[L])
    return make_paraproduct(coeffs, r - 1, system, validate=validate)


def haar_part(system: HaarSystem, f) -> np.ndarray:
    """f minus its generation-0 averages: the part seen by Haar coefficients."""
    return system.matrix.T @ system.coefficients(f)


def carleson_test_sums(T: OperatorMatrix, system: HaarSystem, r: int, weights: dict | None = None) -> dict:
    """Per L: sum of ||Delta_Q T*1||^2 over Q in L at depth >= r-1 whose closure avoids the boundary of L."""
    tstar_one = T.adjoint().apply(np.ones(system.mu.n_atoms))
    per_cube = defaultdict(float)
    for h in system.functions:
        c = system.inner(system.values(h.key), tstar_one)
        per_cube[h.cube] += (weights[h.cube] if weights is not None else 1.0) * c * c
    out = {}
    for L in system.cubes():
        total = 0.0
        for Q, v in per_cube.items():
            if Q.gen - L.gen >= r - 1 and L.contains(Q) and _interior(Q, L):
                total += v
        out[L] = total
    return out


def _interior(Q: Cube, L: Cube) -> bool:
    t, s = Q.side_units, L.side_units
    return all(a < b and b + t < a + s for a, b in zip(L.corner, Q.corner))


def dilated_mass(system: HaarSystem, S: Cube, factor: float = 1.1) -> float:
    """mu of the closed concentric cube with side factor * l(S)."""
    c = S.center
    half = factor * S.side / 2
    inside = np.all(np.abs(system.mu.points - c) <= half, axis=1)
    return float(system.mu.weights[inside].sum())


def delta_tstar_sums(T: OperatorMatrix, system: HaarSystem) -> dict:
    """Per S: sum over Q inside S of ||Delta_Q T*1||^2."""
    tstar_one = T.adjoint().apply(np.ones(system.mu.n_atoms))
    per_cube = defaultdict(float)
    for h in system.functions:
        c = system.inner(system.values(h.key), tstar_one)
        per_cube[h.cube] += c * c
    return {S: sum(v for Q, v in per_cube.items() if S.contains(Q)) for S in system.cubes()}


# -- outer reweighting ---------------------------------------------------------------


@dataclass(frozen=True)
class OuterWeight:
    p: float
    m: dict  # lattice index in the ensemble -> m(Q, R, omega)
    present: float  # probability that both cubes are in the lattice


def outer_weight(Q: Cube, R: Cube, ensemble: LatticeEnsemble, cube_weight=None) -> OuterWeight:
    """p(Q, R) = P(both in L(Q, R) | both in D) and m = 1/p on nice lattices, 0 elsewhere.

    With ``cube_weight(Q, lattice)`` the probabilities are weighted by the
    goodness weight of Q, which keeps E[m w_Q X] = E[w_Q X] when niceness and
    goodness are correlated.  A pair whose weight vanishes everywhere gets p = 1.
    """
    pc = classify_pair(Q, R, ensemble.members[0], r=1 << 30)
    if pc.tag != "outer":
        raise InvalidArgumentError(f"{Q} and {R} are not disjoint")
    num = den = present = 0.0
    nice = {}
    for idx, (lat, prob) in enumerate(ensemble):
        if not (lat.contains(Q) and lat.contains(R)):
            continue
        present += prob
        wq = 1.0 if cube_weight is None else cube_weight(Q, lat)
        _, ok = outer_anchor(Q, R, lat, pc)
        den += prob * wq
        if ok:
            num += prob * wq
        nice[idx] = ok
    if den == 0:
        if present > 0 and cube_weight is None:
            raise ConfigurationError(f"p(Q, R) = 0 for {Q}, {R}")
        return OuterWeight(1.0, {i: 1.0 if ok else 0.0 for i, ok in nice.items()}, present)
    if num == 0:
        raise ConfigurationError(f"no nice lattice for the pair {Q}, {R}")
    p = num / den
    return OuterWeight(p, {i: (1.0 / p if ok else 0.0) for i, ok in nice.items()}, present)


# -- ledger ---------------------------------------------------------------------------


@dataclass
class DecompositionParams:
    r: int
    epsilon: float = 1.0
    gamma: float = 0.25


@dataclass
class ShiftPiece:
    side: str  # "forward" | "adjoint"
    kind: str  # "diagonal" | "near" | "inner_t1" | "inner_t2" | "outer"
    complexity: tuple[int, int]
    decay: float
    constant: float
    shift: object  # DyadicShift with normalized coefficients

    def evaluate(self, f, g) -> float:
        x, y = (f, g) if self.side == "forward" else (g, f)
        return self.decay * self.constant * shift_bilinear(self.shift, x, y)


@dataclass
class ParaproductPiece:
    side: str
    constant: float  # sqrt of the Carleson ratio
    para: Paraproduct  # normalized coefficients

    def evaluate(self, f, g) -> float:
        sys = self.para.system
        x, y = (f, g) if self.side == "forward" else (g, f)
        return self.constant * sys.inner(x, self.para.apply(haar_part(sys, y)))


@dataclass
class DecompositionLedger:
    system: HaarSystem
    params: DecompositionParams
    shifts: list = field(default_factory=list)
    paraproducts: list = field(default_factory=list)
    outer_mode: str = "raw"
    values: dict = field(default_factory=dict)
    clamped_pairs: int = 0

    @property
    def epsilon_T(self) -> float:
        e, g = self.params.epsilon, self.params.gamma
        return min(e / 2, (1 - e * g) / 2)

    @property
    def c1(self) -> float:
        return sum(p.constant for p in self.paraproducts if p.side == "forward")

    @property
    def c2(self) -> float:
        return sum(p.constant for p in self.paraproducts if p.side == "adjoint")

    @property
    def c3(self) -> float:
        return max((p.constant for p in self.shifts), default=0.0)

    def report(self, f=None, g=None) -> dict:
        pieces = []
        for p in self.shifts:
            pieces.append({
                "side": p.side, "type": p.kind, "complexity": list(p.complexity),
                "decay": p.decay, "constant": p.constant, "blocks": len(p.shift.blocks),
                "value": None if f is None else p.evaluate(f, g),
            })
        for p in self.paraproducts:
            pieces.append({
                "side": p.side, "type": "paraproduct", "complexity": [0, p.para.s],
                "decay": 1.0, "constant": p.constant, "blocks": len({L for L, _ in p.para.coeffs}),
                "value": None if f is None else p.evaluate(f, g),
            })
        return {
            "schema": "v1", "r": self.params.r, "epsilon": self.params.epsilon,
            "gamma": self.params.gamma, "c1": self.c1, "c2": self.c2, "c3": self.c3,
            "epsilon_T": self.epsilon_T, "outer_mode": self.outer_mode,
            "clamped_pairs": self.clamped_pairs, "pieces": pieces,
        }


def _decay(kind: str, complexity, params: DecompositionParams) -> float:
    e, g = params.epsilon, params.gamma
    n = max(complexity)
    if kind in ("diagonal", "near"):
        return 1.0
    if kind == "inner_t1":
        return 2.0 ** (-e * n / 2)
    if kind == "inner_t2":
        return 2.0 ** (-(1 - e * g) * n / 2)
    return 2.0 ** (-e * n / 2)


def _side_pieces(T: OperatorMatrix, system: HaarSystem, weights: dict, params: DecompositionParams,
                 strict: bool, side: str, outer_m=None):
    """Raw coefficients of one triangular sum, grouped as (kind, complexity) -> anchor -> coeffs."""
    lattice = system.lattice
    B = haar_matrix(T, system)
    tstar_one = T.adjoint().apply(np.ones(system.mu.n_atoms))
    groups = defaultdict(lambda: defaultdict(dict))
    funcs = system.functions
    clamped = 0
    for qi, hq in enumerate(funcs):
        Q = hq.cube
        wq = weights[Q]
        if wq == 0:
            continue
        for ri, hr in enumerate(funcs):
            R = hr.cube
            if Q.gen < R.gen or (strict and Q.gen == R.gen):
                continue
            pc = classify_pair(Q, R, lattice, params.r)
            key = (hr.key, hq.key)  # output R, input Q
            if pc.tag == "diagonal":
                groups[("diagonal", (0, 0))][Q][key] = wq * B[ri, qi]
            elif pc.tag == "near":
                groups[("near", (0, pc.gap))][R][key] = wq * B[ri, qi]
            elif pc.tag == "inner":
                sp = inner_split(T, system, hq.key, hr.key, params.epsilon, params.gamma, tstar_one)
                groups[("inner_t1", (0, pc.gap))][R][key] = wq * sp.t1
                groups[("inner_t2", (0, pc.gap))][R][key] = wq * sp.t2
            else:
                L, nice = outer_anchor(Q, R, lattice, pc)
                clamped += pc.clamped
                if outer_m is None:
                    if not nice:
                        L = common_ancestor(Q, R, lattice)
                    coef = wq * B[ri, qi]
                else:
                    if not nice:
                        continue
                    coef = wq * B[ri, qi] * outer_m(Q, R)
                comp = (R.gen - L.gen, Q.gen - L.gen)
                groups[("outer", comp)][L][key] = coef
    return groups, clamped


def _normalize(groups, system: HaarSystem, params: DecompositionParams, side: str) -> list:
    pieces = []
    for (kind, comp) in sorted(groups):
        by_anchor = groups[(kind, comp)]
        decay = _decay(kind, comp, params)
        norms = [math.sqrt(sum(v * v for v in c.values())) for c in by_anchor.values()]
        constant = max(norms) / decay if norms else 0.0
        if constant == 0.0:
            continue
        scale = 1.0 / (decay * constant)
        blocks = [
            ShiftBlock(L, {k: v * scale for k, v in coeffs.items()}, comp)
            for L, coeffs in sorted(by_anchor.items())
        ]
        # 1e-12 slack absorbs the rounding in the rescaling
        shift = make_shift(blocks, system, "complexity")
        pieces.append(ShiftPiece(side, kind, comp, decay, constant, shift))
    return pieces


def _pi_piece(T, system, weights, params, side) -> ParaproductPiece | None:
    raw = build_pi(T, system, weights, params.r)
    if not raw.coeffs or raw.carleson_ratio == 0:
        return None
    constant = math.sqrt(raw.carleson_ratio)
    normalized = make_paraproduct({k: v / constant for k, v in raw.coeffs.items()}, raw.s, system)
    return ParaproductPiece(side, constant, normalized)


def assemble_decomposition(T: OperatorMatrix, system: HaarSystem, weights: dict,
                           params: DecompositionParams, f=None, g=None, outer_m=None,
                           adjoint_weights: dict | None = None) -> DecompositionLedger:
    """Ledger of normalized pieces whose sum is the good-pair form of T on this lattice.

    ``outer_m(Q, R)`` switches the outer pairs to the reweighted form: only nice
    lattices keep the pair, multiplied by m.  That form is exact only after
    averaging over the ensemble.
    """
    if len(system.top_cubes) > 1:
        raise ConfigurationError("the measure meets several generation-0 cubes; condition on Omega")
    adjoint_weights = weights if adjoint_weights is None else adjoint_weights
    ledger = DecompositionLedger(system, params, outer_mode="raw" if outer_m is None else "reweighted")
    Tstar = T.adjoint()
    for side, op, wts, strict in (("forward", T, weights, False), ("adjoint", Tstar, adjoint_weights, True)):
        groups, clamped = _side_pieces(op, system, wts, params, strict, side, outer_m)
        ledger.clamped_pairs += clamped
        ledger.shifts.extend(_normalize(groups, system, params, side))
        pi = _pi_piece(op, system, wts, params, side)
        if pi is not None:
            ledger.paraproducts.append(pi)
    if f is not None:
        ledger.values = {"total": reconstruct_bilinear(ledger, f, g)}
    return ledger


def reconstruct_bilinear(ledger: DecompositionLedger, f, g) -> float:
    total = 0.0
    for p in ledger.shifts:
        total += p.evaluate(f, g)
    for p in ledger.paraproducts:
        total += p.evaluate(f, g)
    return float(total)
