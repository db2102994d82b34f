import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nhshift.errors import InvalidArgumentError, ResourceLimitError
from nhshift.lattice import (
    Cube,
    ShiftedDyadicLattice,
    enumerate_ensemble,
    sample_choices,
    sample_lattice,
    skeleton_distance,
)


def lattices(max_d=2, max_N=5):
    @st.composite
    def build(draw):
        d = draw(st.integers(1, max_d))
        N = draw(st.integers(0, max_N))
        choices = tuple(draw(st.integers(0, (1 << d) - 1)) for _ in range(N))
        return ShiftedDyadicLattice(d, N, choices)

    return build()


def test_enumerate_small_cases():
    ens = enumerate_ensemble(1, 2, conditioned=False)
    assert len(ens) == 4
    np.testing.assert_allclose(ens.weights, 0.25)
    one = enumerate_ensemble(1, 0)
    assert len(one) == 1 and one.weights[0] == 1.0


def test_conditioned_membership_by_hand():
    # generation-0 cubes are [o + 4k, o + 4k + 4) in units of 1/4; one must hold the closed [1, 3]
    ens = enumerate_ensemble(1, 2, conditioned=False)
    expected = []
    for lat in ens.members:
        o = lat.offsets[0][0]
        expected.append(any(o + 4 * k <= 1 and 3 < o + 4 * k + 4 for k in (-1, 0)))
    kept = enumerate_ensemble(1, 2)
    assert [lat.in_omega() for lat in ens.members] == expected
    assert len(kept) == sum(expected)
    np.testing.assert_allclose(kept.weights, 1 / len(kept))


@pytest.mark.parametrize("d,N", [(1, 4), (2, 3), (1, 6)])
def test_ensemble_complete_without_duplicates(d, N):
    ens = enumerate_ensemble(d, N, conditioned=False)
    assert len(ens) == (1 << d) ** N
    assert len({lat.choices for lat in ens.members}) == len(ens)
    assert ens.weights.sum() == pytest.approx(1.0)


def test_enumeration_cap():
    with pytest.raises(ResourceLimitError):
        enumerate_ensemble(2, 9)


@pytest.mark.parametrize("d,N", [(1, 1), (1, 5), (2, 3)])
def test_omega_nonempty_and_contains_unshifted(d, N):
    ens = enumerate_ensemble(d, N)
    assert len(ens) > 0
    assert ShiftedDyadicLattice(d, N, (0,) * N) in ens.members


@given(lattices())
def test_generations_nest(lat):
    N = lat.N
    for cell in itertools.product(range(1 << N), repeat=lat.d):
        for k in range(N):
            child = lat.cube_at(k + 1, cell)
            father = lat.cube_at(k, cell)
            assert father.contains(child)
            assert lat.father(child) == father
            assert father.side_units == 2 * child.side_units


@given(lattices())
def test_generation_is_translated_grid(lat):
    for k in range(lat.N + 1):
        side = 1 << (lat.N - k)
        for cell in itertools.product(range(1 << lat.N), repeat=lat.d):
            Q = lat.cube_at(k, cell)
            assert all((c - o) % side == 0 for c, o in zip(Q.corner, lat.offsets[k]))
            assert Q.contains_cell(cell)


@given(lattices())
def test_children_tile_father(lat):
    if lat.N == 0:
        return
    Q = lat.cube_at(0, (0,) * lat.d)
    kids = Q.children()
    assert len(kids) == 1 << lat.d
    cells = itertools.product(*[range(c, c + Q.side_units) for c in Q.corner])
    for cell in cells:
        assert sum(k.contains_cell(cell) for k in kids) == 1


def test_serialization_round_trip():
    lat = ShiftedDyadicLattice(2, 3, (3, 0, 2))
    text = lat.serialize()
    assert text == "2 3 3 0 2"
    assert ShiftedDyadicLattice.parse(text) == lat


def test_sample_lattice_deterministic():
    assert sample_lattice(2, 8, 5) == sample_lattice(2, 8, 5)
    assert sample_lattice(1, 0, 1) == sample_lattice(1, 0, 99)


def test_sampled_choice_frequencies():
    rng = np.random.default_rng(3)
    ch = sample_choices(1, 12, 100_000, rng)
    np.testing.assert_allclose(ch.mean(axis=0), 0.5, atol=0.01)


@pytest.mark.parametrize(
    "q,expected",
    [
        (Cube(4, (8,), 4), 0.0),  # [1/2, 9/16) touches the midpoint
        (Cube(4, (4,), 4), 3 / 16),  # [1/4, 5/16]
        (Cube(2, (2,), 4), 1 / 8),  # [1/8, 3/8)
    ],
)
def test_skeleton_distance_examples(q, expected):
    R = Cube(0, (0,), 4)
    assert skeleton_distance(q, R) == pytest.approx(expected)


def brute_skeleton(Q, R, steps=64):
    """Sample the skeleton facets and the closed cube Q densely in d=2."""
    scale = 1 << Q.depth
    a = np.array(R.corner) / scale
    s = R.side
    pts = []
    ts = np.linspace(0, 1, steps + 1)
    for axis in range(2):
        for plane in (0, s / 2, s):
            for t in ts:
                p = a.copy()
                p[axis] += plane
                p[1 - axis] += t * s
                pts.append(p)
    pts = np.array(pts)
    lo = np.array(Q.corner) / scale
    hi = lo + Q.side
    gaps = np.maximum(0, np.maximum(lo - pts, pts - hi))
    return np.sqrt((gaps**2).sum(1)).min()


@given(st.integers(0, 1000))
def test_skeleton_distance_against_sampling(seed):
    rng = np.random.default_rng(seed)
    N = 5
    R = Cube(1, tuple(int(x) for x in rng.integers(0, 3, 2) * 16), N)
    g = int(rng.integers(2, 6))
    side = 1 << (N - g)
    Q = Cube(g, tuple(int(x) for x in rng.integers(0, 48 // side, 2) * side), N)
    exact = skeleton_distance(Q, R)
    sampled = brute_skeleton(Q, R)
    # sampled facet points are a subset, so sampling can only overestimate by at most the step
    assert exact <= sampled + 1e-12
    assert sampled - exact <= R.side / 64 + 1e-12


def test_skeleton_distance_checks_membership():
    lat = ShiftedDyadicLattice(1, 3, (1, 0, 0))
    Q = Cube(3, (0,), 3)
    stray = Cube(1, (0,), 3)  # the generation-1 grid is offset by 1/8
    with pytest.raises(InvalidArgumentError):
        lat.skeleton_distance(Q, stray)
