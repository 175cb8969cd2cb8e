import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critpotts.lattice import (Annulus, BoundarySegment, Rect, Topology, boundary_vertices,
                               build_lattice, dual_map)


def test_box_2x2_counts():
    lat = build_lattice(2, 2, "box")
    assert lat.num_vertices == 9
    assert lat.num_edges == 12


def test_torus_3x3_counts():
    lat = build_lattice(3, 3, Topology.TORUS)
    assert lat.num_vertices == 9
    assert lat.num_edges == 18


@pytest.mark.parametrize("n, m", [(3, 2), (2, 3), (1, 5)])
def test_degenerate_torus_rejected(n, m):
    with pytest.raises(ValueError, match="degenerate"):
        build_lattice(n, m, "torus")


@pytest.mark.parametrize("n, m", [(1, 0), (3, 2), (4, 4), (5, 1)])
def test_box_edge_count_formula(n, m):
    lat = build_lattice(n, m)
    assert lat.num_edges == m * (n + 1) + n * (m + 1)


def test_south_side_2x2():
    lat = build_lattice(2, 2)
    got = {lat.coords(v) for v in boundary_vertices(lat, "S")}
    assert got == {(0, 0), (1, 0), (2, 0)}


def test_east_west_union():
    lat = build_lattice(2, 2)
    vs = boundary_vertices(lat, BoundarySegment("EW"))
    assert len(vs) == 6 and len(set(vs)) == 6


def test_torus_has_no_boundary():
    assert boundary_vertices(build_lattice(3, 3, "torus"), "S") == []


def test_single_horizontal_edge_dual():
    lat = build_lattice(1, 0)
    dm = dual_map(lat)
    e_star = dm.to_dual[0]
    a, b = dm.dual.edges[e_star]
    (xa, ya), (xb, yb) = dm.dual.coords(int(a)), dm.dual.coords(int(b))
    assert xa == xb and abs(ya - yb) == 1


@pytest.mark.parametrize("lat", [build_lattice(3, 2), build_lattice(4, 4, "torus"),
                                 build_lattice(3, 5, "torus")])
def test_dual_involution(lat):
    dm = dual_map(lat)
    assert np.array_equal(dm.to_primal[dm.to_dual], np.arange(lat.num_edges))


def test_torus_3x3_self_dual():
    lat = build_lattice(3, 3, "torus")
    dm = dual_map(lat)
    assert dm.dual == lat
    assert sorted(dm.to_dual.tolist()) == list(range(18))
    for e in range(lat.num_edges):
        assert lat.is_horizontal(e) != dm.dual.is_horizontal(int(dm.to_dual[e]))


def test_box_dual_covers_every_primal_edge_once():
    lat = build_lattice(3, 2)
    dm = dual_map(lat)
    assert len(set(dm.to_dual.tolist())) == lat.num_edges
    assert (dm.to_primal >= 0).sum() == lat.num_edges


@pytest.mark.parametrize("lat", [build_lattice(3, 2), build_lattice(4, 3, "torus"), build_lattice(0, 2)])
def test_degrees(lat):
    deg = np.array([lat.degree(v) for v in range(lat.num_vertices)])
    if lat.is_torus:
        assert np.all(deg == 4)
    elif lat.n >= 1 and lat.n_prime >= 1:
        x, y = lat.xy[:, 0], lat.xy[:, 1]
        onx = (x == 0) | (x == lat.n)
        ony = (y == 0) | (y == lat.n_prime)
        assert np.all(deg[onx & ony] == 2)
        assert np.all(deg[onx ^ ony] == 3)
        assert np.all(deg[~onx & ~ony] == 4)
    assert deg.sum() == 2 * lat.num_edges


@given(st.integers(1, 6), st.integers(0, 6), st.booleans())
@settings(max_examples=40, deadline=None)
def test_edge_round_trip(n, m, torus):
    if torus and (n < 3 or m < 3):
        return
    lat = build_lattice(n, m, "torus" if torus else "box")
    for e in range(lat.num_edges):
        a, b = lat.edges[e]
        assert lat.edge_between(int(a), int(b)) == e
        assert lat.edge_between(int(b), int(a)) == e
    for v in range(lat.num_vertices):
        assert lat.vertex(*lat.coords(v)) == v


@given(st.integers(0, 3), st.integers(0, 3), st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=40, deadline=None)
def test_annulus_vertices_set_difference(x0, y0, w, h):
    lat = build_lattice(8, 8)
    inner = Rect(x0 + 1, x0 + 1 + w, y0 + 1, y0 + 1 + h)
    outer = Rect(x0, min(8, x0 + w + 2 + 1), y0, min(8, y0 + h + 2 + 1))
    ann = Annulus(outer, inner)
    expect = {lat.vertex(x, y) for x, y in outer.points()} - {lat.vertex(x, y) for x, y in inner.points()}
    assert set(lat.annulus_vertices(ann).tolist()) == expect


def test_annulus_requires_strict_inclusion():
    with pytest.raises(ValueError):
        Annulus(Rect(0, 4, 0, 4), Rect(0, 2, 1, 2))


def test_rect_outside_lattice_rejected():
    with pytest.raises(ValueError):
        build_lattice(3, 3).rect_vertices(Rect(0, 4, 0, 1))
