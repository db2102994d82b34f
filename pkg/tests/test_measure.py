import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nhshift.errors import InvalidArgumentError, InvalidParameterError, ResourceLimitError
from nhshift.lattice import Cube
from nhshift.measure import (
    atoms_in_cube,
    DiscreteMeasure,
    cube_mass,
    growth_constant,
    make_cantor_measure,
    read_measure,
    uniform_grid_measure,
    write_measure,
)

from .conftest import scattered_measure


def brute_growth(points, weights, m, r_min):
    """Closed balls at every atom distance >= r_min, open ball at r_min, plain loops."""
    best = 0.0
    n = len(points)
    for a in range(n):
        dists = [math.dist(points[a], points[b]) for b in range(n)]
        inside = sum(w for dd, w in zip(dists, weights) if dd < r_min)
        best = max(best, inside / r_min**m)
        for rad in dists:
            if rad >= r_min:
                closed = sum(w for dd, w in zip(dists, weights) if dd <= rad)
                best = max(best, closed / rad**m)
    return best


def test_atoms_must_lie_in_central_cube():
    with pytest.raises(InvalidArgumentError):
        DiscreteMeasure([[0.1]], [1.0], 1.0)


def test_negative_weight_rejected():
    with pytest.raises(InvalidParameterError):
        DiscreteMeasure([[0.3], [0.4]], [1.0, -1.0], 1.0)


def test_duplicate_points_rejected():
    with pytest.raises(InvalidArgumentError):
        DiscreteMeasure([[0.3], [0.3]], [1.0, 1.0], 1.0)


def test_zero_weights_dropped():
    mu = DiscreteMeasure([[0.3], [0.4], [0.5]], [1.0, 0.0, 2.0], 1.0)
    assert mu.n_atoms == 2
    assert mu.total_mass == 3.0


def test_default_r_min_is_half_min_spacing():
    mu = DiscreteMeasure([[0.3], [0.4], [0.6]], [1, 1, 1], 1.0)
    assert mu.r_min == pytest.approx(0.05)


def test_cantor_depth_zero_is_centre_atom():
    mu = make_cantor_measure(1, 1.0, 0, 0.25, total_mass=1.0)
    assert mu.n_atoms == 1
    assert mu.points[0, 0] == 0.5
    assert mu.total_mass == 1.0


def test_cantor_depth_three_points():
    mu = make_cantor_measure(1, 1.0, 3, 0.25, total_mass=1.0)
    # recursive oracle: keep the outer quarter of every interval
    ivs = [(0.25, 0.75)]
    for _ in range(3):
        ivs = [piece for a, b in ivs for piece in ((a, a + (b - a) / 4), (b - (b - a) / 4, b))]
    expected = sorted((a + b) / 2 for a, b in ivs)
    np.testing.assert_allclose(np.sort(mu.points[:, 0]), expected, atol=1e-15)
    np.testing.assert_allclose(mu.weights, 1 / 8)


def test_cantor_growth_normalized():
    mu = make_cantor_measure(1, 0.5, 4, 0.25)
    assert growth_constant(mu, 0.5) <= 1 + 1e-9


def test_cantor_rejects_bad_contraction_and_size():
    with pytest.raises(InvalidParameterError):
        make_cantor_measure(1, 1.0, 2, 0.5)
    with pytest.raises(InvalidParameterError):
        make_cantor_measure(1, 0.3, 2, 0.4)  # dimension log2/log2.5 > 0.3
    with pytest.raises(ResourceLimitError):
        make_cantor_measure(2, 2.0, 8, 0.25)


def test_growth_single_atom():
    mu = DiscreteMeasure([[0.5]], [0.3], 1.0, r_min=0.1)
    assert growth_constant(mu, 1.0) == pytest.approx(3.0)


def test_growth_zero_measure():
    mu = DiscreteMeasure([[0.5]], [0.0], 1.0)
    assert growth_constant(mu) == 0.0


def test_growth_sixteen_uniform_atoms():
    pts = 0.25 + np.arange(16) / 30
    mu = DiscreteMeasure(pts[:, None], np.full(16, 1 / 16), 1.0)
    value = growth_constant(mu, 1.0)
    assert value == pytest.approx(brute_growth(pts[:, None], mu.weights, 1.0, mu.r_min), rel=1e-12)
    # r_min = 1/60; the closed ball of radius 1/30 around an interior atom holds 3 atoms
    assert value == pytest.approx(max(1 / 16 * 60, 3 / 16 * 30, 5 / 16 * 15))


@given(st.integers(0, 10_000), st.integers(1, 2), st.floats(0.3, 2.0))
def test_growth_matches_brute_force(seed, d, m):
    rng = np.random.default_rng(seed)
    mu = scattered_measure(rng, d, 4, int(rng.integers(1, 9)), m)
    assert growth_constant(mu, m) == pytest.approx(brute_growth(mu.points, mu.weights, m, mu.r_min), rel=1e-12)


@given(st.integers(0, 10_000))
def test_growth_monotone_in_order(seed):
    rng = np.random.default_rng(seed)
    mu = scattered_measure(rng, 1, 5, 6)
    m1, m2 = 0.5, 1.5
    assert growth_constant(mu, m1) >= growth_constant(mu, m2) * mu.r_min ** (m2 - m1) - 1e-12


def test_cube_mass_examples():
    mu = uniform_grid_measure(1, 5, 1.0)
    assert mu.n_atoms == 16
    assert cube_mass(mu, Cube(0, (0,), 5)) == pytest.approx(1.0)
    assert cube_mass(mu, Cube(1, (0,), 5)) == pytest.approx(0.5)
    assert cube_mass(mu, Cube(3, (0,), 5)) == 0.0


@given(st.integers(0, 10_000))
def test_cube_mass_additive(seed):
    rng = np.random.default_rng(seed)
    mu = scattered_measure(rng, 2, 4, 10)
    for gen in range(4):
        side = 1 << (4 - gen)
        for corner in itertools.product(range(0, 16, side), repeat=2):
            Q = Cube(gen, corner, 4)
            # membership partitions exactly; masses agree up to summation order
            members = sum(atoms_in_cube(mu, c).astype(int) for c in Q.children())
            np.testing.assert_array_equal(members, atoms_in_cube(mu, Q).astype(int))
            assert cube_mass(mu, Q) == pytest.approx(sum(cube_mass(mu, c) for c in Q.children()), rel=1e-14)


def test_measure_file_round_trip(tmp_path, rng):
    mu = scattered_measure(rng, 2, 5, 7, m=1.3)
    path = tmp_path / "mu.txt"
    write_measure(mu, path)
    assert path.read_text().startswith("dim=2 m=1.3")
    back = read_measure(path)
    np.testing.assert_array_equal(back.points, mu.points)
    np.testing.assert_array_equal(back.weights, mu.weights)
    assert back.m == mu.m
