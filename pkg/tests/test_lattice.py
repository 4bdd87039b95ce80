import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from z2higgs import gf2
from z2higgs.exact import TinyLattice, cycle_space
from z2higgs.lattice import Chain, LatticeGeometry, PathChain, build_line_pair, dist, spanning_surface

GEOM = LatticeGeometry.box(3, 1)


@pytest.mark.parametrize("k, n", [(0, 27), (1, 54), (2, 36), (3, 8)])
def test_cell_counts(k, n):
    assert GEOM.n_cells(k) == n
    assert len(GEOM.cells(k)) == n


def test_index_roundtrip():
    for k in range(4):
        for i, c in enumerate(GEOM.cells(k)):
            assert GEOM.index(*c) == i
    with pytest.raises((KeyError, ValueError)):
        GEOM.index((5, 0, 0), ())


def test_plaquette_boundary_is_oriented_square():
    bd = Chain(2, {((0, 0, 0), (0, 1)): 1}).boundary()
    assert len(bd) == 4
    assert set(bd.coeffs.values()) == {-1, 1}
    assert not bd.boundary().coeffs
    assert PathChain(1, bd.coeffs).classify().kind == "loop"


def test_path_boundary_is_endpoint_difference():
    g = PathChain.from_vertices([(0, 0, 0), (1, 0, 0), (1, 1, 0)])
    assert g.boundary().coeffs == {((1, 1, 0), ()): 1, ((0, 0, 0), ()): -1}
    c = g.classify()
    assert (c.kind, c.start, c.end) == ("open", (0, 0, 0), (1, 1, 0))


def test_classify_edge_cases():
    assert PathChain().classify().kind == "loop"
    three_ends = PathChain.from_vertices([(0, 0, 0), (1, 0, 0)]) + \
        PathChain.from_vertices([(0, 1, 0), (1, 1, 0)])
    assert PathChain(1, three_ends.coeffs).classify().kind == "invalid"
    with pytest.raises(ValueError):
        PathChain(1, {((0, 0, 0), (0,)): 2})
    with pytest.raises(ValueError):
        PathChain.from_vertices([(0, 0, 0), (1, 1, 0)])


def test_coboundary_counts():
    interior = GEOM.coboundary((0, 0, 0), (0,))
    assert len(interior) == 4
    corner = GEOM.coboundary((-1, -1, -1), ())
    assert len(corner) == 3
    assert sorted(corner.coeffs.values()) == [-1, -1, -1]
    wall = GEOM.coboundary((-1, 1, 1), (0,))
    assert len(wall) < 4


def test_d_of_single_edge():
    s = np.zeros(GEOM.n_cells(1), np.uint8)
    assert not GEOM.d(s, 1).any()
    s[GEOM.index((0, 0, 0), (0,))] = 1
    assert GEOM.d(s, 1).sum() == 4


def test_codifferential_of_plaquette():
    w = np.zeros(GEOM.n_cells(2), np.uint8)
    assert not GEOM.codifferential(w).any()
    w[GEOM.index((0, 0, 0), (0, 2))] = 1
    assert GEOM.codifferential(w).sum() == 4


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=27, max_size=27))
def test_dd_zero_on_zero_forms(bits):
    assert not GEOM.d(GEOM.d(np.array(bits), 0), 1).any()


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.integers(0, 7), st.integers(-3, 3), max_size=8))
def test_boundary_boundary_zero_on_three_chains(coeffs):
    c = Chain(3, {GEOM.cell(3, i): v for i, v in coeffs.items()})
    assert not c.boundary().boundary().coeffs


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=36, max_size=36), st.integers(0, 53))
def test_codifferential_adjoint(omega, e):
    # <delta omega, e> equals <omega, boundary-incidence image of e>
    omega = np.array(omega)
    g = np.zeros(54, np.int64)
    g[e] = 1
    lhs = int(GEOM.codifferential(omega) @ g) % 2
    rhs = int(omega @ (GEOM.incidence(2).T @ g)) % 2
    assert lhs == rhs


def test_chain_algebra():
    a = Chain(1, {((0, 0, 0), (0,)): 1})
    assert not (a - a).coeffs
    assert (a + a).mod2() == Chain(1)
    assert -(-a) == a
    v = a.to_vector(GEOM)
    assert Chain.from_vector(v, 1, GEOM) == a


@pytest.mark.parametrize("R, T", [(1, 1), (1, 2), (2, 2), (2, 6)])
def test_line_pair(R, T):
    geom = LatticeGeometry.box(3, 4)
    g1, g2 = build_line_pair(R, T, geom)
    assert g1.length == g2.length == 2 * R + T
    assert g1.classify().kind == "open"
    loop = PathChain(1, (g1 + g2).coeffs)
    assert loop.classify().kind == "loop" and loop.length == 2 * (2 * R + T)


def test_line_pair_distances():
    geom = LatticeGeometry.box(3, 4)
    g1, g2 = build_line_pair(2, 2, geom)
    # the two lines share their endpoints
    assert dist(g1, g2) == 0
    bottom = [key for key in g1.coeffs if key[1] == (0,)]
    assert min(dist(Chain(1, {key: 1}), g2) for key in bottom) == 2
    g1, g2 = build_line_pair(2, 6, geom)
    far = [key for key in g1.coeffs if dist(Chain(1, {key: 1}), g2) == 4]
    assert len(far) == 2
    with pytest.raises(ValueError):
        build_line_pair(5, 2, geom)


def test_dist_basics():
    a = PathChain.from_vertices([(0, 0, 0), (1, 0, 0)])
    b = PathChain.from_vertices([(0, 1, 0), (1, 1, 0)])
    assert dist(a, a) == 0
    assert dist(a, b) == 1


def test_spanning_surface_rectangle():
    geom = LatticeGeometry.box(3, 3)
    g1, g2 = build_line_pair(1, 3, geom)
    q = spanning_surface(g1 + g2, geom)
    assert len(q) == 2 * 1 * 3
    p = Chain(2, {((0, 0, 0), (1, 2)): 1})
    assert spanning_surface(p.boundary()).mod2() == p


def test_spanning_surface_random_cycles():
    lat = TinyLattice.cube(1)
    cycles = cycle_space(lat)
    assert len(cycles) == 32
    rng = np.random.default_rng(3)
    for i in rng.choice(len(cycles), 10, replace=False):
        c = Chain.from_vector(cycles[i], 1, lat.geom)
        q = spanning_surface(c, lat.geom)
        assert q.boundary().mod2() == c.mod2()
    with pytest.raises(ValueError):
        spanning_surface(PathChain.from_vertices([(0, 0, 0), (1, 0, 0)]))


def test_gf2_rank_and_solve():
    A = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]], np.uint8)
    assert gf2.rank(A) == 2
    assert len(gf2.nullspace(A)) == 1
    x = gf2.solve(A, np.array([1, 0, 1], np.uint8))
    assert x is not None and np.array_equal(A @ x % 2, [1, 0, 1])
    assert gf2.solve(A, np.array([1, 0, 0], np.uint8)) is None
