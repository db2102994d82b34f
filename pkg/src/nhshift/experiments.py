"""Measured quantities shared by the CLI, the scripts and the acceptance suite."""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from .czop import OperatorMatrix, haar_matrix, testing_constants
from .decompose import (
    DecompositionParams,
    assemble_decomposition,
    carleson_test_sums,
    cube_distance,
    delta_tstar_sums,
    dilated_mass,
    good_pair_form,
    inner_split,
    reconstruct_bilinear,
)
from .haar import HaarSystem
from .lattice import Cube

# -- Haar system checks ---------------------------------------------------------


def haar_residuals(system: HaarSystem, rng) -> dict:
    """Orthonormality, Parseval, child-coefficient and telescoping residuals."""
    w = system.mu.weights
    n = system.mu.n_atoms
    G = system.gram()
    gram = float(np.abs(G - np.eye(len(G))).max()) if len(G) else 0.0

    # Haar functions only see generation-N averages, so test a cell-constant f
    f = system.expectation(rng.standard_normal(n), system.lattice.N)
    coeffs = system.coefficients(f)
    top = system.top_matrix @ (w * f)
    parseval = abs(float(np.sum(w * f * f)) - float(coeffs @ coeffs) - float(top @ top))

    excess = 0.0
    for h in system.functions:
        kids = h.children
        for child, c in zip(kids, h.coeffs):
            m = system.mass.get(child, 0.0)
            if m > 0:
                excess = max(excess, abs(c) - 1 / math.sqrt(m))

    # E_N f - E_0 f equals the sum of all martingale differences
    N = system.lattice.N
    lhs = system.expectation(f, N) - system.expectation(f, 0)
    rhs = sum(system.delta_projection(f, Q) for Q in system.haar_cubes()) if system.n_functions else 0.0
    telescoping = float(np.abs(lhs - rhs).max())
    return {"gram": gram, "parseval": parseval, "child_excess": excess, "telescoping": telescoping}


# -- decay envelopes ------------------------------------------------------------


def boundary_distance(Q: Cube, S: Cube) -> float:
    """Distance from Q to the boundary of S, for Q inside S."""
    t, s = Q.side_units, S.side_units
    gaps = [min(b - a, a + s - (b + t)) for a, b in zip(S.corner, Q.corner)]
    return min(gaps) / (1 << Q.depth)


def inner_envelope(T: OperatorMatrix, systems, epsilon: float, gamma: float, far_only: bool = True) -> list[dict]:
    """Per scale gap n: worst |t1| / sqrt(mu Q / mu R) and |t2| / sqrt(mu Q / mu S).

    ``far_only`` keeps pairs with dist(Q, boundary of S) >= l(Q)^gamma l(R)^(1 - gamma),
    the goodness condition of Q checked against R alone.
    """
    worst = defaultdict(lambda: [0.0, 0.0, 0])
    seen = set()
    tstar_one = T.adjoint().apply(np.ones(T.mu.n_atoms))
    for system in systems:
        lat = system.lattice
        for hq in system.functions:
            for hr in system.functions:
                Q, R = hq.cube, hr.cube
                if Q.gen <= R.gen or not R.contains(Q):
                    continue
                if (hq.key, hr.key) in seen:
                    continue
                seen.add((hq.key, hr.key))
                S = lat.ancestor(Q, R.gen + 1)
                if far_only and boundary_distance(Q, S) < Q.side**gamma * R.side ** (1 - gamma):
                    continue
                sp = inner_split(T, system, hq.key, hr.key, epsilon, gamma, tstar_one)
                n = Q.gen - R.gen
                row = worst[n]
                row[0] = max(row[0], abs(sp.t1) / math.sqrt(system.mass[Q] / system.mass[R]))
                row[1] = max(row[1], abs(sp.t2) / math.sqrt(system.mass[Q] / system.mass[S]))
                row[2] += 1
    return [{"gap": n, "t1": v[0], "t2": v[1], "pairs": v[2]} for n, v in sorted(worst.items())]


def outer_envelope(T: OperatorMatrix, systems, gamma: float) -> list[dict]:
    """Per scale gap: worst |(T h_Q, h_R)| / sqrt(mu Q mu R) over separated disjoint pairs.

    Separated means dist(Q, R) >= l(Q)^gamma l(R)^(1 - gamma), the distance
    goodness of Q grants against R.
    """
    worst = defaultdict(lambda: [0.0, 0])
    seen = set()
    for system in systems:
        B = haar_matrix(T, system)
        for qi, hq in enumerate(system.functions):
            for ri, hr in enumerate(system.functions):
                Q, R = hq.cube, hr.cube
                if Q.gen < R.gen or Q.intersects(R) or (hq.key, hr.key) in seen:
                    continue
                seen.add((hq.key, hr.key))
                if cube_distance(Q, R) < Q.side**gamma * R.side ** (1 - gamma):
                    continue
                v = abs(B[ri, qi]) / math.sqrt(system.mass[Q] * system.mass[R])
                row = worst[Q.gen - R.gen]
                row[0] = max(row[0], v)
                row[1] += 1
    return [{"gap": n, "element": v[0], "pairs": v[1]} for n, v in sorted(worst.items())]


def log2_slope(gaps, values) -> float:
    """Least-squares slope of log2(value) against the gap; zero values are dropped."""
    pts = [(g, math.log2(v)) for g, v in zip(gaps, values) if v > 0]
    if len(pts) < 2:
        return float("nan")
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


# -- Carleson / testing chain ---------------------------------------------------


def carleson_chain(T: OperatorMatrix, systems, r: int) -> dict:
    """Testing constant C0, the worst Carleson ratio of the pi-sums and the fitted constants.

    ``C`` is the single constant with ratio <= C * C0 over every L of every
    lattice; ``C1`` the single constant with sum_{Q in S} ||Delta_Q T*1||^2 <= C1 mu(1.1 S).
    """
    tc = testing_constants(T, systems)
    worst_ratio, worst_L = 0.0, None
    worst_c1, worst_S = 0.0, None
    for system in systems:
        for L, total in carleson_test_sums(T, system, r).items():
            ratio = total / system.mass[L]
            if ratio > worst_ratio:
                worst_ratio, worst_L = ratio, L
        for S, total in delta_tstar_sums(T, system).items():
            m = dilated_mass(system, S, 1.1)
            if m > 0 and total / m > worst_c1:
                worst_c1, worst_S = total / m, S
    return {
        "C0": tc.C0,
        "carleson_ratio": worst_ratio,
        "worst_L": str(worst_L),
        "C": worst_ratio / tc.C0 if tc.C0 > 0 else float("inf"),
        "C1": worst_c1,
        "worst_S": str(worst_S),
    }


# -- norm bound ---------------------------------------------------------------


def averaged_compression(T: OperatorMatrix, ensemble, systems) -> OperatorMatrix:
    """E over lattices of P T P, with P the projection onto that lattice's Haar span."""
    w = T.mu.weights
    A = np.zeros_like(T.matrix)
    for (_, prob), system in zip(ensemble, systems):
        P = system.matrix.T @ (system.matrix * w)
        A += prob * (P @ T.matrix @ P)
    return OperatorMatrix(A, T.mu)


def ledger_norm_bound(ledger) -> float:
    """Sum of every piece's constant times decay, paraproducts counted at norm 2."""
    shifts = sum(p.constant * p.decay for p in ledger.shifts)
    paras = sum(2.0 * p.constant for p in ledger.paraproducts)
    return shifts + paras


def series_bound(c1: float, c2: float, c3: float, eps_T: float, n_max: int) -> float:
    """c3 sum_n 2^(-n eps_T)(n + 1) + 2 (c1 + c2), truncated at n_max."""
    s = sum(2.0 ** (-n * eps_T) * (n + 1) for n in range(n_max + 1))
    return c3 * s + 2.0 * (c1 + c2)


def t1_bound_report(T: OperatorMatrix, ensemble, systems, weights_for, params: DecompositionParams) -> dict:
    """Compare the averaged Haar compression of T with bounds read off the decomposition.

    With really-good weights, half of E[(T P f, P g)] is the ensemble average
    of the good-pair forms, so the averaged compression has norm at most
    twice the largest per-lattice ledger bound.
    """
    direct = averaged_compression(T, ensemble, systems).norm()
    ledger_bounds, series = [], []
    for system in systems:
        led = assemble_decomposition(T, system, weights_for(system), params)
        ledger_bounds.append(ledger_norm_bound(led))
        series.append(series_bound(led.c1, led.c2, led.c3, led.epsilon_T, 2 * system.lattice.N))
    bound = 2 * max(ledger_bounds)
    return {
        "operator_norm": T.norm(),
        "compressed_norm": direct,
        "ledger_bound": bound,
        "series_bound": 2 * max(series),
        "ratio": direct / bound if bound > 0 else 0.0,
        "holds": bool(direct <= bound * (1 + 1e-9)),
    }


def ledger_residual(T, system, weights, params, f, g) -> float:
    led = assemble_decomposition(T, system, weights, params)
    return abs(reconstruct_bilinear(led, f, g) - good_pair_form(T, system, weights, f, g))

