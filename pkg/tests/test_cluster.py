import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from z2higgs import cluster as cx
from z2higgs.exact import TinyLattice
from z2higgs.lattice import LatticeGeometry, PathChain, build_line_pair
from z2higgs.model import ModelParams

B1 = LatticeGeometry.box(3, 1)
B2 = LatticeGeometry.box(3, 2)
E0 = B1.index((0, 0, 0), (0,))
P0 = B1.index((0, 0, 0), (0, 1))


def test_degree_bounds():
    assert cx.degree_bounds(3) == {"G0": 11, "G1": 12, "G2": 12, "G3": 10}
    b4 = cx.degree_bounds(4)
    assert (b4["G1"], b4["G2"]) == (18, 20)


def test_graph_degrees_match_bounds():
    seen = {kind: max(len(nb) for nb in cx.adjacency(kind, B2)) for kind in ("G0", "G1", "G2", "G3")}
    # M0 is a ceiling; the edge graph through shared vertices has degree 2(2m - 1)
    assert seen == {"G0": 10, "G1": 12, "G2": 12, "G3": 10}
    assert all(v <= cx.degree_bounds(3)[k] for k, v in seen.items())


def test_kappa0_against_grid():
    alpha, k0 = cx.kappa0_higgs(3)
    grid = np.arange(1e-5, 1, 1e-5)
    assert k0 == pytest.approx(cx.kappa0_objective(grid, 3).min(), abs=1e-4)
    assert 0 < alpha < 1


def test_beta0_flip():
    b0 = cx.beta0_conf(3)
    assert b0 > 0
    assert cx.conf_feasible(b0 * 0.99) and not cx.conf_feasible(b0 * 1.01)


def test_polymer_counts():
    e = cx.interior_cells(B2, 1)[0]
    assert len(cx.enumerate_polymers("G1", e, 1, B2)) == 1
    deg = len(cx.adjacency("G1", B2)[e])
    assert len(cx.enumerate_polymers("G1", e, 2, B2)) == 1 + deg
    p = cx.interior_cells(B2, 2)[0]
    two = cx.enumerate_polymers("G2", p, 2, B2)
    deg2 = len(cx.adjacency("G2", B2)[p])
    assert len(two) == 1 + deg2 <= 144


def test_connected_sets_against_brute_force():
    geom = LatticeGeometry.from_ranges([(0, 2), (0, 1), (0, 1)])
    adj = cx.adjacency_masks("G1", geom)
    E = geom.n_cells(1)
    fast = {s for s in cx.connected_sets(adj, 0, 3)}
    slow = set()
    for k in range(1, 4):
        for cells in itertools.combinations(range(E), k):
            if 0 in cells and cx.is_connected(cells, adj):
                slow.add(cx.mask_of(cells))
    assert fast == slow


def test_make_polymer_rejects_disconnected():
    far = B1.index((-1, -1, -1), (0,))
    with pytest.raises(ValueError):
        cx.make_polymer("G1", [E0, far], B1)


def test_ursell_examples():
    e1 = B1.index((1, 0, 0), (1,))
    e2 = B1.index((0, 1, 0), (0,))
    P = [cx.make_polymer("G1", [e], B1) for e in (E0, e1, e2)]
    assert cx.ursell(cx.ClusterMultiset(P[:1], B1)) == 1
    assert cx.ursell(cx.ClusterMultiset(P[:2], B1)) == -1
    assert cx.ursell(cx.ClusterMultiset(P, B1)) == 2
    # a repeated polymer is incompatible with itself
    assert cx.ursell(cx.ClusterMultiset([P[0], P[0]], B1)) == -1
    with pytest.raises(ValueError):
        cx.ursell(cx.ClusterMultiset(P[:1], B1), "softcore")


def test_decomposable_multiset_rejected():
    far = cx.make_polymer("G1", [B1.index((-1, -1, -1), (0,))], B1)
    with pytest.raises(ValueError):
        cx.ClusterMultiset([cx.make_polymer("G1", [E0], B1), far], B1)


weights = st.integers(1, 5).flatmap(
    lambda n: st.lists(st.integers(-2, 0), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2)
    .map(lambda ws: (n, ws)))


def _matrix(n, ws):
    w = [[0] * n for _ in range(n)]
    for (i, j), x in zip(itertools.combinations(range(n), 2), ws):
        w[i][j] = w[j][i] = x
    return w


@settings(max_examples=100, deadline=None)
@given(weights)
def test_connected_graph_sum_matches_brute_force(nw):
    w = _matrix(*nw)
    assert cx.connected_graph_sum(w) == cx.connected_graph_sum_bruteforce(w)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 4).flatmap(
    lambda n: st.lists(st.integers(0, 1), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2)
    .map(lambda ws: (n, ws))))
def test_cluster_check_matches_bipartitions(nw):
    rel = [[abs(x) for x in row] for row in _matrix(*nw)]
    assert cx.is_cluster(rel) == (not cx.is_decomposable_bruteforce(rel))


def test_psi_single_edge():
    p = ModelParams(0.3, 1.1)
    S = cx.ClusterMultiset([cx.make_polymer("G1", [E0], B1)], B1)
    ref = math.exp(-16 * p.beta - 4 * p.kappa)
    assert cx.psi(S, p) == pytest.approx(ref)
    through = PathChain.from_vertices([(-1, 0, 0), (0, 0, 0), (1, 0, 0)])
    assert cx.psi(S, p, through) == pytest.approx(-ref)


def test_psi_single_plaquette_confinement():
    p = ModelParams(0.2, 0.1)
    S = cx.ClusterMultiset([cx.make_polymer("G2", [P0], B1)], B1)
    ref = math.tanh(2 * p.beta) * math.tanh(2 * p.kappa) ** 4
    assert cx.psi(S, p, phase="confinement") == pytest.approx(ref)


def test_logz_leading_order():
    lat = TinyLattice.cube(1)
    geom = lat.geom
    p = ModelParams(0.5, 1.9)
    r = cx.truncated_series("logz", p, None, 1, 1, geom)
    deg = (geom.edge_plaquettes >= 0).sum(1)
    ref = np.exp(-4 * p.beta * deg - 4 * p.kappa).sum()
    assert float(r.value) == pytest.approx(ref, rel=1e-12)
    assert r.n_clusters == geom.n_cells(1)


def test_logwilson_residuals_decrease():
    from z2higgs.exact import exact_expectations
    import mpmath
    lat = TinyLattice.cube(1)
    p = ModelParams(0.5, 1.8)
    g = PathChain.from_vertices([(0, 0, 0), (1, 0, 0)])
    _, vals, _ = exact_expectations(lat, p, [g], precise=True)
    ex = -mpmath.log(vals[0])
    res = [abs(cx.truncated_series("logwilson", p, g, n, n, lat.geom).value - ex) for n in (1, 2, 3)]
    assert res[0] > res[1] > res[2]


def test_logrho_far_lines_vanish():
    geom = LatticeGeometry.box(3, 3)
    g1, g2 = build_line_pair(3, 1, geom)
    # the lines meet only at their endpoints, three steps from the middle
    r = cx.truncated_series("logrho", ModelParams(0.5, 3.0), [g1, g2], 1, 1, geom)
    assert float(r.value) == 0.0


def test_single_cell_formula():
    alpha, k0 = cx.kappa0_higgs(3)
    eps = 0.3
    kappa = k0 + 1.0
    c = cx.ceps_closed(eps)
    assert cx.single_cell_bound(1, kappa, eps) == pytest.approx(c / 4 * math.exp(-4 * (kappa - k0 - eps)))
    with pytest.raises(cx.DomainError):
        cx.single_cell_bound(1, k0, eps)
    assert cx.bound_eval("SingleCell", 1, kappa, eps) == cx.single_cell_bound(1, kappa, eps)


def test_tail_conf_small_eps():
    b = 1e-6
    c = cx.ceps_conf(b)
    assert cx.tail_conf(3, b, 1e-12) == pytest.approx(c, rel=1e-4)
    with pytest.raises(cx.DomainError):
        cx.tail_conf(3, b, 1.0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_enumerated_sum_below_single_cell_bound(k):
    _, k0 = cx.kappa0_higgs(3)
    p = ModelParams(0.0, k0 + 0.5)
    eps = cx.default_eps(p.kappa)
    e = cx.interior_cells(B2, 1)[0]
    lhs = float(cx.abs_sum_at_edge(B2, e, p, 2, 3, kmin=k))
    assert lhs <= cx.single_cell_bound(k, p.kappa, eps)
