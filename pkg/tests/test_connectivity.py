import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from critpotts.connectivity import (connected_without_edge, label_clusters,
                                    largest_cluster_fraction)
from critpotts.lattice import build_lattice
from critpotts.model import FKBoundary


def _edges(lat):
    return [tuple(map(int, e)) for e in lat.edges]


def test_all_closed_free():
    lat = build_lattice(3, 3)
    lab = label_clusters(np.zeros(lat.num_edges, np.uint8), FKBoundary.free(lat))
    assert lab.k == lat.num_vertices and np.all(lab.sizes == 1)
    assert largest_cluster_fraction(lab) == pytest.approx(1 / lat.num_vertices)


def test_all_closed_wired():
    lat = build_lattice(3, 3)
    bc = FKBoundary.wired(lat)
    lab = label_clusters(bc.extreme_config(0), bc)
    assert lab.k == int((~lat.boundary_mask).sum()) + 1


def test_all_open():
    lat = build_lattice(3, 3, "torus")
    lab = label_clusters(np.ones(lat.num_edges, np.uint8), FKBoundary.periodic_bc(lat))
    assert lab.k == 1 and largest_cluster_fraction(lab) == 1.0


def test_two_cluster_torus():
    lat = build_lattice(3, 3, "torus")
    omega = np.zeros(lat.num_edges, np.uint8)
    # rows 0 and 1 joined (6 sites), row 2 a separate ring (3 sites)
    for x in range(3):
        omega[lat.horizontal_edge(x, 0)] = 1
        omega[lat.horizontal_edge(x, 2)] = 1
    omega[lat.vertical_edge(0, 0)] = 1
    omega[lat.horizontal_edge(0, 1)] = omega[lat.horizontal_edge(1, 1)] = 1
    lab = label_clusters(omega, FKBoundary.periodic_bc(lat))
    assert lab.k == 2
    assert largest_cluster_fraction(lab) == pytest.approx(6 / 9)


@pytest.mark.parametrize("bcname", ["free", "wired", "S"])
def test_labels_match_bfs(bcname, rng):
    lat = build_lattice(3, 3)
    bc = {"free": FKBoundary.free, "wired": FKBoundary.wired}.get(
        bcname, lambda l: FKBoundary.wired_sides(l, "S"))(lat)
    for _ in range(200):
        omega = np.where(bc.dynamic_edges, rng.random(lat.num_edges) < 0.5,
                         bc.fixed_values).astype(np.uint8)
        lab = label_clusters(omega, bc)
        want = oracles.components(lat.num_vertices, _edges(lat), omega, bc.classes)
        assert lab.labels.tolist() == want
        assert lab.k == len(set(want))
        assert lab.sizes.sum() == lat.num_vertices


def test_lone_open_edge_not_connected():
    lat = build_lattice(3, 3)
    omega = np.zeros(lat.num_edges, np.uint8)
    e = lat.horizontal_edge(1, 1)
    omega[e] = 1
    assert not connected_without_edge(omega, FKBoundary.free(lat), e)


def test_four_cycle_connected():
    lat = build_lattice(3, 3)
    omega = np.zeros(lat.num_edges, np.uint8)
    cyc = [lat.horizontal_edge(1, 1), lat.horizontal_edge(1, 2),
           lat.vertical_edge(1, 1), lat.vertical_edge(2, 1)]
    omega[cyc] = 1
    assert connected_without_edge(omega, FKBoundary.free(lat), cyc[0])


def test_wiring_teleports():
    lat = build_lattice(2, 2)
    bc = FKBoundary.wired(lat)
    omega = bc.extreme_config(0)
    # interior edge from the centre to the south side: endpoints (1,1) and (1,0)
    e = lat.vertical_edge(1, 0)
    omega[lat.vertical_edge(1, 1)] = 1   # centre to the north side
    assert connected_without_edge(omega, bc, e)


def test_fixed_edge_rejected():
    lat = build_lattice(2, 2)
    bc = FKBoundary.wired(lat)
    with pytest.raises(ValueError):
        connected_without_edge(bc.extreme_config(0), bc, lat.horizontal_edge(0, 0))


@pytest.mark.parametrize("bcname", ["free", "wired", "SN", "torus"])
def test_connected_without_edge_matches_bfs(bcname, rng):
    if bcname == "torus":
        lat = build_lattice(3, 3, "torus")
        bc = FKBoundary.periodic_bc(lat)
    else:
        lat = build_lattice(3, 3)
        bc = {"free": FKBoundary.free, "wired": FKBoundary.wired}.get(
            bcname, lambda l: FKBoundary.from_partition(l, [l.boundary_vertices("S"),
                                                            l.boundary_vertices("N")]))(lat)
    dyn = bc.dynamic_edge_list
    for _ in range(500):
        omega = np.where(bc.dynamic_edges, rng.random(lat.num_edges) < 0.5,
                         bc.fixed_values).astype(np.uint8)
        e = int(rng.choice(dyn))
        w = omega.copy()
        w[e] = 0
        a, b = map(int, lat.edges[e])
        want = oracles.connected(lat.num_vertices, _edges(lat), w, a, b, bc.classes)
        assert connected_without_edge(omega, bc, e) == want
        assert connected_without_edge(omega, bc, e, backend="relabel") == want
        omega[e] ^= 1
        assert connected_without_edge(omega, bc, e) == want


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=50, deadline=None)
def test_labels_invariant_under_edge_order(seed):
    rng = np.random.default_rng(seed)
    lat = build_lattice(4, 3)
    omega = (rng.random(lat.num_edges) < 0.5).astype(np.uint8)
    perm = rng.permutation(lat.num_edges)
    # relabel the lattice's edge list in a shuffled order and compare partitions
    edges = [tuple(map(int, lat.edges[i])) for i in perm]
    want = oracles.components(lat.num_vertices, edges, omega[perm])
    assert label_clusters(omega, None, lattice=lat).labels.tolist() == want


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=50, deadline=None)
def test_open_close_monotone_counts(seed):
    rng = np.random.default_rng(seed)
    lat = build_lattice(4, 4)
    bc = FKBoundary.wired_sides(lat, "E")
    omega = np.where(bc.dynamic_edges, rng.random(lat.num_edges) < 0.4,
                     bc.fixed_values).astype(np.uint8)
    e = int(rng.choice(bc.dynamic_edge_list))
    lo, hi = omega.copy(), omega.copy()
    lo[e], hi[e] = 0, 1
    k_lo, k_hi = label_clusters(lo, bc).k, label_clusters(hi, bc).k
    assert k_hi <= k_lo <= k_hi + 1
