"""
Cluster labelling and edge-deletion connectivity for bond configurations.

Boundary wirings are represented by a per-vertex class array ``cls``
(``cls[v]`` is the representative of the wired class containing ``v``, or -1)
together with a CSR list of class members, so searches can jump across a
wired class without materialising a clique.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np


# --------------------------------------------------------------------------
# numba kernels

@nb.njit(cache=True, inline="always")
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@nb.njit(cache=True)
def _union(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return False
    # keep the smaller index as root so labels come out as min vertex
    if ra < rb:
        parent[rb] = ra
    else:
        parent[ra] = rb
    return True


@nb.njit(cache=True)
def union_find_labels(n_vertices, edges, omega, cls, parent):
    """Fill ``parent`` with min-vertex cluster labels; return cluster count."""
    for v in range(n_vertices):
        parent[v] = v
    k = n_vertices
    for v in range(n_vertices):
        c = cls[v]
        if c >= 0 and c != v:
            if _union(parent, v, c):
                k -= 1
    for e in range(edges.shape[0]):
        if omega[e]:
            if _union(parent, edges[e, 0], edges[e, 1]):
                k -= 1
    for v in range(n_vertices):
        parent[v] = _find(parent, v)
    return k


@nb.njit(cache=True)
def count_clusters(n_vertices, edges, omega, cls, parent):
    k = n_vertices
    for v in range(n_vertices):
        parent[v] = v
    for v in range(n_vertices):
        c = cls[v]
        if c >= 0 and c != v:
            if _union(parent, v, c):
                k -= 1
    for e in range(edges.shape[0]):
        if omega[e]:
            if _union(parent, edges[e, 0], edges[e, 1]):
                k -= 1
    return k


@nb.njit(cache=True)
def bidirectional_connected(ptr, nbr, eid, omega, cls, cptr, cmem, skip_e, a, b,
                            mark, cmark, stamp, qa, qb):
    """Is ``a`` joined to ``b`` by open edges other than ``skip_e`` plus wirings?

    Two breadth-first searches grow alternately from ``a`` and ``b`` and stop as
    soon as one reaches a vertex seen by the other (connected) or one runs out
    of vertices (disconnected). ``mark``/``cmark`` hold ``2*stamp`` for side A
    and ``2*stamp+1`` for side B, so no reset is needed between queries when
    ``stamp`` increases.
    """
    if a == b:
        return True
    if cls[a] >= 0 and cls[a] == cls[b]:
        return True
    sa = 2 * stamp
    sb = sa + 1
    mark[a] = sa
    mark[b] = sb
    ha, ta = 0, 1
    hb, tb = 0, 1
    qa[0] = a
    qb[0] = b
    while ha < ta and hb < tb:
        # ---- side A
        x = qa[ha]
        ha += 1
        c = cls[x]
        if c >= 0 and cmark[c] != sa:
            if cmark[c] == sb:
                return True
            cmark[c] = sa
            for j in range(cptr[c], cptr[c + 1]):
                y = cmem[j]
                m = mark[y]
                if m == sb:
                    return True
                if m != sa:
                    mark[y] = sa
                    qa[ta] = y
                    ta += 1
        for j in range(ptr[x], ptr[x + 1]):
            f = eid[j]
            if f == skip_e or omega[f] == 0:
                continue
            y = nbr[j]
            m = mark[y]
            if m == sb:
                return True
            if m != sa:
                mark[y] = sa
                qa[ta] = y
                ta += 1
        # ---- side B
        x = qb[hb]
        hb += 1
        c = cls[x]
        if c >= 0 and cmark[c] != sb:
            if cmark[c] == sa:
                return True
            cmark[c] = sb
            for j in range(cptr[c], cptr[c + 1]):
                y = cmem[j]
                m = mark[y]
                if m == sa:
                    return True
                if m != sb:
                    mark[y] = sb
                    qb[tb] = y
                    tb += 1
        for j in range(ptr[x], ptr[x + 1]):
            f = eid[j]
            if f == skip_e or omega[f] == 0:
                continue
            y = nbr[j]
            m = mark[y]
            if m == sa:
                return True
            if m != sb:
                mark[y] = sb
                qb[tb] = y
                tb += 1
    return False


# --------------------------------------------------------------------------
# Python layer

@dataclass(frozen=True)
class ClusterLabeling:
    labels: np.ndarray  # min vertex index of each vertex's cluster
    k: int
    sizes: np.ndarray   # sizes indexed like np.unique(labels)
    largest_fraction: float

    def same_cluster(self, u: int, v: int) -> bool:
        return bool(self.labels[u] == self.labels[v])


def _wiring(bc, n_vertices):
    if bc is None:
        return np.full(n_vertices, -1, dtype=np.int64)
    return bc.cls


def label_clusters(omega: np.ndarray, bc, lattice=None) -> ClusterLabeling:
    """Clusters of ``omega`` with the wired classes of ``bc`` merged.

    ``bc`` is an :class:`~critpotts.model.FKBoundary` (its lattice is used) or
    ``None`` for no wiring, in which case ``lattice`` must be given.
    """
    lat = bc.lattice if bc is not None else lattice
    V = lat.num_vertices
    parent = np.empty(V, dtype=np.int64)
    k = union_find_labels(V, lat.edges, np.asarray(omega, dtype=np.uint8),
                          _wiring(bc, V), parent)
    _, sizes = np.unique(parent, return_counts=True)
    return ClusterLabeling(parent, int(k), sizes, float(sizes.max()) / V)


def largest_cluster_fraction(labeling: ClusterLabeling) -> float:
    return labeling.largest_fraction


class ConnectivityWorkspace:
    """Scratch arrays for repeated :func:`connected_without_edge` queries."""

    def __init__(self, bc):
        lat = bc.lattice
        V = lat.num_vertices
        self.bc = bc
        self.ptr, self.nbr, self.eid = lat.adjacency
        self.mark = np.full(V, -1, dtype=np.int64)
        self.cmark = np.full(V, -1, dtype=np.int64)
        self.qa = np.empty(V, dtype=np.int64)
        self.qb = np.empty(V, dtype=np.int64)
        self.stamp = 0

    def query(self, omega, e):
        self.stamp += 1
        a, b = self.bc.lattice.edges[e]
        return bool(bidirectional_connected(
            self.ptr, self.nbr, self.eid, omega, self.bc.cls, self.bc.class_ptr,
            self.bc.class_members, e, a, b, self.mark, self.cmark, self.stamp,
            self.qa, self.qb))


def connected_without_edge(omega: np.ndarray, bc, e: int, backend: str = "bfs",
                           workspace: ConnectivityWorkspace | None = None) -> bool:
    """Whether the endpoints of ``e`` are connected in ``omega - {e}`` plus wirings.

    ``backend="bfs"`` runs the bidirectional search; ``"relabel"`` recomputes
    all clusters with ``e`` closed and is kept for cross-checking.
    """
    if not bc.dynamic_edges[e]:
        raise ValueError(f"edge {e} is fixed by the boundary condition")
    omega = np.asarray(omega, dtype=np.uint8)
    if backend == "relabel":
        w = omega.copy()
        w[e] = 0
        lab = label_clusters(w, bc)
        a, b = bc.lattice.edges[e]
        return lab.same_cluster(a, b)
    if backend != "bfs":
        raise ValueError(f"unknown backend {backend!r}")
    ws = workspace if workspace is not None else ConnectivityWorkspace(bc)
    return ws.query(omega, e)
