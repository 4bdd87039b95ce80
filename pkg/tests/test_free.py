import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from z2higgs import cluster as cx
from z2higgs import free
from z2higgs.exact import TinyLattice, exact_mf_ratio
from z2higgs.lattice import Chain, LatticeGeometry, PathChain, build_line_pair, spanning_surface
from z2higgs.model import ModelParams

B1 = LatticeGeometry.box(3, 1)
B2 = LatticeGeometry.box(3, 2)


def _u_path(h, T, x0=0):
    """From (x0, 0, 0) out to height h in x2, T steps along x1, and back."""
    s = 1 if h >= 0 else -1
    pts = [(x0, s * y, 0) for y in range(abs(h) + 1)]
    pts += [(x0 + x, h, 0) for x in range(1, T + 1)]
    pts += [(x0 + T, h - s * y, 0) for y in range(1, abs(h) + 1)]
    return PathChain.from_vertices(pts)


@settings(max_examples=60, deadline=None)
@given(st.integers(-3, 3), st.integers(1, 4), st.integers(-2, 2))
def test_mirror_involution(h, T, x0):
    g = _u_path(h, T, x0)
    m = free.mirrored_path(g)
    assert m.length == g.length
    assert free.mirrored_path(m) == g
    assert (m.boundary() + g.boundary()).coeffs == {}
    assert PathChain(1, (g + m).coeffs).classify().kind == "loop"


def test_mirror_fixes_axis_segment():
    g = _u_path(0, 3)
    assert free.mirrored_path(g) == -g
    up = _u_path(1, 2)
    down = free.mirrored_path(up)
    assert all(key[0][1] <= 0 for key in down.coeffs)
    with pytest.raises(ValueError):
        free.mirrored_path(PathChain.from_vertices([(0, 0, 0), (0, 1, 0)]))


def test_l1_squares_at_interior_vertex():
    v = B2.index((0, 0, 0), ())
    polys = free.enumerate_free_polymers("L1", v, 4, B2)
    assert len(polys) == 12
    assert all(p.size == 4 for p in polys)


def test_l2_minimal_size():
    pl = B2.index((0, 0, 0), (0, 1))
    assert free.enumerate_free_polymers("L2", pl, 3, B2) == []
    four = free.enumerate_free_polymers("L2", pl, 4, B2)
    assert len(four) == 4 and all(p.size == 4 for p in four)


def test_polymers_are_closed():
    for p in free.all_free_polymers("L1", 6, B1):
        v = np.zeros(B1.n_cells(1), np.uint8)
        v[list(p.cells)] = 1
        assert not (B1.incidence(1) @ v % 2).any()
    for p in free.all_free_polymers("L2", 6, B1):
        w = np.zeros(B1.n_cells(2), np.uint8)
        w[list(p.cells)] = 1
        assert not B1.d(w, 2).any()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 53), min_size=1, max_size=4),
       st.lists(st.integers(0, 35), min_size=1, max_size=4))
def test_linking_independent_of_surface(edges, plaqs):
    # omega = d(1-form) is closed; the cycle bounds the random plaquette set
    s = np.zeros(54, np.uint8)
    s[edges] = 1
    omega = cx.mask_of(np.flatnonzero(B1.d(s, 1)))
    q1 = Chain(2, {B1.cell(2, i): 1 for i in set(plaqs)})
    cyc = q1.boundary().mod2()
    if not cyc.coeffs:
        return
    q2 = spanning_surface(cyc, B1)
    m1 = cx.mask_of(B1.index(*k) for k in q1.coeffs)
    m2 = cx.mask_of(B1.index(*k) for k in q2.mod2().coeffs)
    assert free.linking_parity(omega, m1) == free.linking_parity(omega, m2)


def test_psi_free_single_polymers():
    p = ModelParams(0.4, 0.15)
    pl = B1.index((0, 0, 0), (0, 1))
    square = free.FreePolymer("L1", tuple(sorted(int(e) for e in B1.plaquette_edges[pl])))
    S = free.MixedCluster([square], B1)
    assert free.psi_free(S, p) == pytest.approx(math.tanh(2 * p.kappa) ** 4)
    e = B1.index((0, 0, 0), (0,))
    s = np.zeros(B1.n_cells(1), np.uint8)
    s[e] = 1
    surf = free.FreePolymer("L2", tuple(int(x) for x in np.flatnonzero(B1.d(s, 1))))
    S2 = free.MixedCluster([surf], B1)
    far = Chain(2, {((-1, -1, -1), (1, 2)): 1}).boundary()
    linked = Chain(2, {((0, 0, 0), (0, 1)): 1}).boundary()
    ref = math.exp(-4 * p.beta * 4)
    assert free.psi_free(S2, p, far) == pytest.approx(ref)
    assert free.psi_free(S2, p, linked) == pytest.approx(-ref)
    # a cycle through a vertex of gamma0 is excluded
    g0 = PathChain.from_vertices([(0, 0, 0), (0, 0, 1)])
    assert free.psi_free(S, p, None, g0) == 0.0


def test_mixed_pair_weight():
    pl = B1.index((0, 0, 0), (0, 1))
    square = free.FreePolymer("L1", tuple(sorted(int(e) for e in B1.plaquette_edges[pl])))
    s = np.zeros(B1.n_cells(1), np.uint8)
    s[B1.index((0, 0, 0), (0,))] = 1
    surf = free.FreePolymer("L2", tuple(int(x) for x in np.flatnonzero(B1.d(s, 1))))
    S = free.MixedCluster([square, surf], B1)
    assert cx.ursell(S, "freemixed") == -2


def test_free_series_against_exact():
    lat = TinyLattice.cube(1)
    p = ModelParams(1.0, 0.05)
    gamma = PathChain.from_vertices([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 0)])
    ex = mpmath.log(free.exact_check_z_pair(lat, p, gamma, None))
    pool = free.FreePool(lat.geom, 8)
    res = [abs(free.free_series(p, gamma, None, n, 8, lat.geom, pool).value - ex) for n in (1, 2)]
    assert res[1] < res[0] < 1e-2


def test_decompose_open_line():
    geom = LatticeGeometry.box(3, 3)
    R, T = 1, 3
    g1, _ = build_line_pair(R, T, geom)
    assert len(free.decompose_open_line(g1, T - 1, geom)) == 0
    k = 0.1
    dec = free.decompose_open_line(g1, T, geom, k)
    a = -(T // 2)
    straight = PathChain.from_vertices([(a + x, 0, 0) for x in range(T + 1)])
    hits = [w for c, n, w in dec.rows if c.mod2() == straight.mod2()]
    assert hits == [pytest.approx(math.tanh(2 * k) ** T)]


def test_bounds_limits():
    assert free.path_path(0.5, 1e-12) == pytest.approx(0.0, abs=1e-9)
    # at a = 1/2 the spin-spin series converges only for beta > log 10
    s3 = free.spin_spin(0.5, 3.0)
    s6 = free.spin_spin(0.5, 6.0)
    assert math.isfinite(s3) and s6 < s3
    for b in (0.3, 2.0, 2.3):
        with pytest.raises(free.Divergent):
            free.spin_spin(0.5, b)
    with pytest.raises(ValueError):
        free.free_bound_eval("nope", 1)


def test_kp_feasibility():
    assert free.kp_feasible(0.5, 3.0, 0.0005)
    assert not free.kp_feasible(0.5, 0.3, 0.05)


def test_report_monotone_and_vanishing():
    p = ModelParams(3.0, 0.0005)
    geom = LatticeGeometry.box(3, 4)
    a = free.mf_ratio_free_report(p, 1, 2, geom)
    b = free.mf_ratio_free_report(p, 1, 4, geom)
    assert a.admissible and b.sqrt_rho_bound < a.sqrt_rho_bound
    tiny = free.mf_ratio_free_report(ModelParams(3.0, 1e-9), 1, 2, geom)
    assert tiny.sqrt_rho_bound < 1e-12


def test_report_exact_branch():
    lat = TinyLattice(LatticeGeometry.from_ranges([(0, 1), (-1, 1), (0, 1)]))
    p = ModelParams(1.0, 0.05)
    rep = free.mf_ratio_free_report(p, 1, 1, lat.geom, L_max=lat.n_edges, lat=lat)
    g1, g2 = build_line_pair(1, 1, lat.geom)
    ref = exact_mf_ratio(lat, p, g1, g2)
    assert rep.exact["rho"] == pytest.approx(ref, rel=1e-10)
    assert rep.exact["decomposed_check_z_gamma1"] == pytest.approx(rep.exact["check_z_gamma1"], rel=1e-10)
