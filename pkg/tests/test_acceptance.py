"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Where goodness is vacuous at the stated scale (every cube good, weights 1/2),
a companion test repeats the check at N=10 where the really-good weights
genuinely vary.
"""

import math
import time

import numpy as np
import pytest

from nhshift.averaging import haar_systems, really_good_probability, verify_half_identity
from nhshift.czop import OperatorMatrix, builtin_kernel, discretize_kernel
from nhshift.decompose import (
    DecompositionParams,
    assemble_decomposition,
    build_pi,
    carleson_test_sums,
    classify_pair,
    delta_tstar_sums,
    dilated_mass,
    good_pair_form,
    haar_part,
    inner_split,
    outer_weight,
    reconstruct_bilinear,
)
from nhshift.experiments import carleson_chain, haar_residuals, inner_envelope, log2_slope, outer_envelope
from nhshift.goodness import Equalizer, GoodnessParams, default_r, goodness_scan
from nhshift.haar import HaarSystem
from nhshift.lattice import enumerate_ensemble, sample_ensemble, sample_lattice
from nhshift.measure import make_cantor_measure, uniform_grid_measure
from nhshift.shifts import make_paraproduct, make_shift, shift_norm

from .conftest import scattered_measure
from .test_shifts import normalized, random_blocks, random_para_coeffs

ENS4 = enumerate_ensemble(1, 4)
ENS5 = enumerate_ensemble(1, 5)


def mean_zero(mu, rng):
    f = rng.standard_normal(mu.n_atoms)
    return f - np.sum(mu.weights * f) / mu.weights.sum()


def l2(mu, f):
    return math.sqrt(float(np.sum(mu.weights * f * f)))


@pytest.fixture(scope="module")
def desk():
    """16 scattered atoms at N=4 and the goodness parameters the scale allows."""
    rng = np.random.default_rng(101)
    mu = scattered_measure(rng, 1, 4, 16)
    systems = haar_systems(mu, ENS4)
    cubes = sorted({Q for s in systems for Q in s.cubes()})
    r = default_r(cubes, 0.25)
    return mu, systems, cubes, Equalizer(GoodnessParams(r, 0.25)), r


@pytest.fixture(scope="module")
def deep():
    """14 scattered atoms at N=10 with gamma=0.45, r=8: goodness is non-trivial there."""
    rng = np.random.default_rng(202)
    mu = scattered_measure(rng, 1, 10, 14)
    ens = enumerate_ensemble(1, 10)
    return mu, ens, Equalizer(GoodnessParams(8, 0.45))


@pytest.fixture(scope="module")
def cantor5():
    mu = make_cantor_measure(1, 1.0, 4, 1 / 3)
    T = discretize_kernel(builtin_kernel("riesz", 1.0, mu), mu)
    return mu, T, haar_systems(mu, ENS5)


# -- 1, 2: averaging identity ----------------------------------------------------


def _half_identity_sweep(mu, ens, eq, rng, n_ops, n_pairs, strictness):
    worst = 0.0
    for _ in range(n_ops):
        T = OperatorMatrix.random(mu, rng)
        norm = T.norm()
        for _ in range(n_pairs):
            f, g = mean_zero(mu, rng), mean_zero(mu, rng)
            scale = norm * l2(mu, f) * l2(mu, g)
            for s in strictness:
                res = verify_half_identity(T, f, g, ens, eq, s)
                worst = max(worst, res.abs_diff / scale)
    return worst


def test_criterion_01_averaging_identity(desk, criterion):
    mu, _, _, eq, r = desk
    t0 = time.time()
    worst = _half_identity_sweep(mu, ENS4, eq, np.random.default_rng(1), 20, 20, ("ge", "gt"))
    elapsed = time.time() - t0
    ok = worst <= 1e-10 and elapsed <= 60
    criterion("1", ok, f"N=4, 400 (T,f,g), worst scaled |diff|={worst:.2e}, {elapsed:.1f}s "
                       f"(r={r}: every cube good, weights 1/2)")
    assert ok


def test_criterion_01_companion_deep(deep, criterion):
    mu, ens, eq = deep
    worst = _half_identity_sweep(mu, ens, eq, np.random.default_rng(11), 2, 1, ("ge", "gt"))
    criterion("1.deep", worst <= 1e-10, f"N=10, gamma=0.45, r=8, worst scaled |diff|={worst:.2e}")
    assert worst <= 1e-10


def test_criterion_02_all_pairs_variant(desk, criterion):
    mu, _, _, eq, _ = desk
    worst = _half_identity_sweep(mu, ENS4, eq, np.random.default_rng(2), 20, 20, ("all",))
    criterion("2", worst <= 1e-10, f"N=4, 400 (T,f,g), worst scaled |diff|={worst:.2e}")
    assert worst <= 1e-10


def test_criterion_02_companion_deep(deep, criterion):
    mu, ens, eq = deep
    worst = _half_identity_sweep(mu, ens, eq, np.random.default_rng(12), 2, 1, ("all",))
    criterion("2.deep", worst <= 1e-10, f"N=10, gamma=0.45, r=8, worst scaled |diff|={worst:.2e}")
    assert worst <= 1e-10


# -- 3: Haar system --------------------------------------------------------------


def test_criterion_03_haar_system(criterion):
    rng = np.random.default_rng(3)
    worst = {"gram": 0.0, "parseval": 0.0, "child_excess": 0.0, "telescoping": 0.0}
    for trial in range(100):
        d = 1 + trial % 2
        N = int(rng.integers(2, 5))
        mu = scattered_measure(rng, d, N, int(rng.integers(2, 20)))
        lat = sample_lattice(d, N, int(rng.integers(1 << 30)))
        res = haar_residuals(HaarSystem(mu, lat), rng)
        worst = {k: max(worst[k], res[k]) for k in worst}
    ok = all(v <= 1e-12 for v in worst.values())
    criterion("3", ok, "100 (mu, lattice), worst " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok


# -- 4: shift norms -------------------------------------------------------------


def test_criterion_04_shift_norms(criterion):
    rng = np.random.default_rng(4)
    mu = scattered_measure(rng, 1, 5, 24)
    systems = [HaarSystem(mu, lat) for lat in ENS5.members]
    comp = order = para = 0.0
    order_ok = True
    for i in range(200):
        sys = systems[i % len(systems)]
        m, n = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        S = make_shift(random_blocks(sys, rng, [(m, n)]), sys)
        comp = max(comp, shift_norm(S))
        k = i % 5
        pairs = [(a, b) for a in range(k + 1) for b in range(k + 1)]
        S = make_shift(random_blocks(sys, rng, pairs), sys, mode="order", order=k)
        v = shift_norm(S)
        order = max(order, v / (k + 1))
        order_ok &= v <= k + 1 + 1e-9
        s = int(rng.integers(0, 3))
        P = make_paraproduct(normalized(sys, random_para_coeffs(sys, rng, s)), s, sys)
        para = max(para, P.norm())
    ok = comp <= 1 + 1e-9 and order_ok and para <= 2 + 1e-9
    criterion("4", ok, f"max complexity norm {comp:.4f}, max order norm/(n+1) {order:.4f}, "
                       f"max paraproduct norm {para:.4f}")
    assert ok


# -- 5: inner split -------------------------------------------------------------


def test_criterion_05_inner_split(criterion):
    rng = np.random.default_rng(5)
    mu = scattered_measure(rng, 1, 5, 20)
    T = OperatorMatrix.random(mu, rng)
    tstar_one = T.adjoint().apply(np.ones(mu.n_atoms))
    worst, pairs = 0.0, 0
    for sys in haar_systems(mu, ENS5):
        for hq in sys.functions:
            for hr in sys.functions:
                if hq.cube.gen <= hr.cube.gen or not hr.cube.contains(hq.cube):
                    continue
                sp = inner_split(T, sys, hq.key, hr.key, tstar_one=tstar_one)
                # the three parts may cancel, so measure against their own size too
                size = max(abs(sp.element), abs(sp.para) + abs(sp.t1) + abs(sp.t2), 1e-300)
                worst = max(worst, abs(sp.total - sp.element) / size)
                pairs += 1
    ok = worst <= 1e-12 and pairs > 0
    criterion("5", ok, f"{pairs} inner pairs over {len(ENS5)} lattices, worst relative error {worst:.1e}")
    assert ok


# -- 6: ledger ------------------------------------------------------------------


def test_criterion_06_ledger_bookkeeping(criterion):
    rng = np.random.default_rng(6)
    mu = scattered_measure(rng, 1, 4, 14)
    systems = haar_systems(mu, ENS4)
    worst, kinds = 0.0, set()
    for i in range(50):
        sys = systems[int(rng.integers(len(systems)))]
        T = OperatorMatrix.random(mu, rng)
        f, g = rng.standard_normal((2, mu.n_atoms))
        w = {Q: float(rng.uniform(0.2, 1.0)) for Q in sys.cubes()}
        led = assemble_decomposition(T, sys, w, DecompositionParams(2))
        kinds |= {p.kind for p in led.shifts} | ({"paraproduct"} if led.paraproducts else set())
        worst = max(worst, abs(reconstruct_bilinear(led, f, g) - good_pair_form(T, sys, w, f, g)))
    needed = {"diagonal", "near", "inner_t1", "inner_t2", "outer", "paraproduct"}
    ok = worst <= 1e-10 and needed <= kinds
    criterion("6", ok, f"50 (T,f,g,omega), worst |diff|={worst:.1e}, pieces seen: {sorted(kinds)}")
    assert ok


# -- 7: paraproduct identity ---------------------------------------------------


def test_criterion_07_pi_identity(cantor5, criterion):
    mu, T, systems = cantor5
    rng = np.random.default_rng(7)
    tstar_one = T.adjoint().apply(np.ones(mu.n_atoms))
    worst = 0.0
    for r in (2, 3):
        for sys in systems:
            f, g = rng.standard_normal((2, mu.n_atoms))
            a, b = sys.coefficients(f), sys.coefficients(g)
            w = {Q: float(rng.choice([0.0, 1.0])) for Q in sys.cubes()}
            lhs = 0.0
            for qi, hq in enumerate(sys.functions):
                for ri, hr in enumerate(sys.functions):
                    pc = hq.cube.gen >= hr.cube.gen and classify_pair(hq.cube, hr.cube, sys.lattice, r)
                    if pc and pc.tag == "inner":
                        sp = inner_split(T, sys, hq.key, hr.key, tstar_one=tstar_one)
                        lhs += w[hq.cube] * sp.para * a[qi] * b[ri]
            rhs = sys.inner(f, build_pi(T, sys, w, r).apply(haar_part(sys, g)))
            worst = max(worst, abs(lhs - rhs) / (T.norm() * l2(mu, f) * l2(mu, g)))
    ok = worst <= 1e-10
    criterion("7", ok, f"Riesz kernel, Cantor depth 4, N=5, r in (2, 3), worst scaled |diff|={worst:.1e}")
    assert ok


# -- 8: Carleson / testing chain ------------------------------------------------


def _carleson_brute(T, sys, r):
    """Same sums through expectation differences instead of Haar functions."""
    tstar_one = T.adjoint().apply(np.ones(T.mu.n_atoms))
    norms = {}
    for Q in sys.haar_cubes():
        v = sys.delta_projection(tstar_one, Q, method="expectation")
        norms[Q] = sys.inner(v, v)
    carl, lem = {}, {}
    for L in sys.cubes():
        inside = [Q for Q in norms if L.contains(Q)]
        lem[L] = sum(norms[Q] for Q in inside)
        carl[L] = sum(
            norms[Q] for Q in inside
            if Q.gen - L.gen >= r - 1
            and all(a < b and b + Q.side_units < a + L.side_units for a, b in zip(L.corner, Q.corner))
        )
    return carl, lem


def test_criterion_08_carleson_chain(cantor5, criterion):
    mu, T, systems = cantor5
    r = 2
    chain = carleson_chain(T, systems, r)
    route_gap = 0.0
    ok_carl = ok_lem = True
    for sys in systems:
        carl, lem = _carleson_brute(T, sys, r)
        fast_carl, fast_lem = carleson_test_sums(T, sys, r), delta_tstar_sums(T, sys)
        for L in sys.cubes():
            route_gap = max(route_gap, abs(carl[L] - fast_carl[L]), abs(lem[L] - fast_lem[L]))
            ok_carl &= carl[L] <= chain["C"] * chain["C0"] * sys.mass[L] * (1 + 1e-12)
            ok_lem &= lem[L] <= chain["C1"] * dilated_mass(sys, L, 1.1) * (1 + 1e-12)
    ok = ok_carl and ok_lem and route_gap <= 1e-12 and math.isfinite(chain["C"] * chain["C1"])
    criterion("8", ok, f"C0={chain['C0']:.4f}, worst Carleson ratio={chain['carleson_ratio']:.4f}, "
                       f"C={chain['C']:.4f}, C1={chain['C1']:.4f}, route gap={route_gap:.1e}")
    assert ok


# -- 9: decay envelopes and bad-cube probability --------------------------------


SLOPE_TARGET = -0.5 + 0.1  # -epsilon/2 within 0.1, epsilon = 1


@pytest.mark.xfail(strict=True, reason="no inner pair at N=5 satisfies the goodness distance; see README")
def test_criterion_09_inner_envelope_stated_scale(cantor5, criterion):
    mu, T, systems = cantor5
    rows = inner_envelope(T, systems, 1.0, 0.25)
    slope = log2_slope([r["gap"] for r in rows], [r["t1"] for r in rows])
    # without the goodness distance the envelope only shows the size bound
    proxy = inner_envelope(T, systems, 1.0, 0.25, far_only=False)
    proxy_slope = log2_slope([r["gap"] for r in proxy], [r["t1"] for r in proxy])
    ok = slope <= SLOPE_TARGET
    criterion("9.inner", ok, f"N=5: {sum(r['pairs'] for r in rows)} far inner pairs, t1 slope={slope:.3f}; "
                             f"all inner pairs slope={proxy_slope:.3f}")
    assert ok


def test_criterion_09_outer_envelope(cantor5, criterion):
    mu, T, systems = cantor5
    rows = outer_envelope(T, systems, 0.25)
    slope = log2_slope([r["gap"] for r in rows], [r["element"] for r in rows])
    ok = slope <= SLOPE_TARGET
    criterion("9.outer", ok, f"N=5: {sum(r['pairs'] for r in rows)} separated pairs, slope={slope:.3f}")
    assert ok


@pytest.fixture(scope="module")
def cantor10():
    mu = make_cantor_measure(1, 1.0, 6, 1 / 3)
    T = discretize_kernel(builtin_kernel("riesz", 1.0, mu), mu)
    ens = sample_ensemble(1, 10, 4, seed=9)
    return mu, T, haar_systems(mu, ens)


def test_criterion_09_envelopes_deep(cantor10, criterion):
    mu, T, systems = cantor10
    inner = inner_envelope(T, systems, 1.0, 0.45)
    outer = outer_envelope(T, systems, 0.45)
    s1 = log2_slope([r["gap"] for r in inner], [r["t1"] for r in inner])
    s2 = log2_slope([r["gap"] for r in inner], [r["t2"] for r in inner])
    so = log2_slope([r["gap"] for r in outer], [r["element"] for r in outer])
    ok = s1 <= SLOPE_TARGET and so <= SLOPE_TARGET and s2 < 0
    criterion("9.deep", ok, f"N=10, Cantor depth 6, gamma=0.45: t1 slope={s1:.3f}, t2 slope={s2:.3f}, "
                            f"outer slope={so:.3f}")
    assert ok


def test_criterion_09_bad_probability(cantor10, criterion):
    _, _, systems = cantor10
    cubes = sorted({Q for s in systems for Q in s.cubes()})
    rs = list(range(1, 11))
    rows = goodness_scan(cubes, rs, 0.25)
    worst = [max(row["p_bad"] for row in rows if row["r"] == r and row["generation"] >= r) for r in rs]
    monotone = all(b <= a + 1e-15 for a, b in zip(worst, worst[1:]))
    slope = log2_slope(rs, worst)
    ok = monotone and slope < 0
    criterion("9.bad", ok, f"N=10, gamma=1/4, worst p_bad by r={[round(v, 4) for v in worst]}, "
                           f"non-increasing={monotone}, log2 slope={slope:.4f}")
    assert ok


# -- 10: equalization -----------------------------------------------------------


def test_criterion_10_equalization(desk, criterion):
    mu, systems, cubes, eq, r = desk
    eligible = [Q for Q in cubes if Q.gen >= r]
    dev = max((abs(really_good_probability(Q, ENS4, eq) - 0.5) for Q in eligible), default=0.0)
    # the only r that equalizes at N=4 exceeds every generation, so nothing is checked
    ok = dev <= 1e-12
    criterion("10", ok, f"N=4, r={r}: {len(eligible)} cubes with g(Q) >= r, worst deviation {dev:.1e}")
    assert ok


def test_criterion_10_companion_deep(deep, criterion):
    mu, ens, eq = deep
    systems = haar_systems(mu, ens)
    cubes = sorted({Q for s in systems for Q in s.cubes() if Q.gen >= eq.params.r})
    devs = [abs(really_good_probability(Q, ens, eq) - 0.5) for Q in cubes]
    p = [eq.p_good(Q) for Q in cubes]
    ok = max(devs) <= 1e-12 and len(cubes) > 0
    criterion("10.deep", ok, f"N=10, r=8: {len(cubes)} cubes, P(good) in [{min(p):.4f}, {max(p):.4f}], "
                             f"worst deviation {max(devs):.1e}")
    assert ok


# -- 11: outer reweighting ------------------------------------------------------


def _outer_check(d, N):
    ens = enumerate_ensemble(d, N)
    mu = uniform_grid_measure(d, N, 1.0)
    systems = haar_systems(mu, ens)
    cubes = sorted({Q for s in systems for Q in s.cubes()})
    worst, min_p, pairs = 0.0, 1.0, 0
    for Q in cubes:
        for R in cubes:
            if Q.gen < R.gen or Q.intersects(R):
                continue
            if not any(lat.contains(Q) and lat.contains(R) for lat in ens.members):
                continue
            ow = outer_weight(Q, R, ens)
            mean = sum(ens.weights[i] * m for i, m in ow.m.items()) / ow.present
            worst = max(worst, abs(mean - 1.0))
            min_p = min(min_p, ow.p)
            pairs += 1
    return worst, min_p, pairs


def test_criterion_11_outer_reweighting(criterion):
    worst, min_p, pairs = _outer_check(1, 4)
    _, min_p5, _ = _outer_check(1, 5)
    ok = worst <= 1e-12 and min_p > 0
    criterion("11", ok, f"N=4: {pairs} outer pairs, worst |E m - 1|={worst:.1e}, min p={min_p:.4f} "
                        f"(N=5: min p={min_p5:.4f})")
    assert ok
