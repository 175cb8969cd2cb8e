"""
Rectangular boxes and tori of Z^2: vertex/edge enumeration, boundary sides,
sub-rectangles, annuli and planar duals.

Coordinates are ``(x, y)`` with ``x`` pointing east and ``y`` north.

Enumeration conventions
-----------------------
Box ``n x n'``
    vertices ``[0, n] x [0, n']``, index ``x + (n + 1) * y``.
    Horizontal edges ``(x, y)-(x+1, y)`` come first with index ``x + n * y``
    (``n * (n' + 1)`` of them), then vertical edges ``(x, y)-(x, y+1)`` with
    index ``H + x + (n + 1) * y`` (``(n + 1) * n'`` of them).
Torus ``n x n'``
    vertices ``Z_n x Z_n'``, index ``x + n * y``; horizontal edge at base
    ``(x, y)`` has index ``x + n * y``, vertical edge ``n * n' + x + n * y``.
    ``2 * n * n'`` edges, every vertex has degree 4.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Union

import numpy as np


class Topology(str, enum.Enum):
    BOX = "box"
    TORUS = "torus"


_SIDES = "NSEW"


@dataclass(frozen=True)
class Rect:
    """Closed integer rectangle ``[x0, x1] x [y0, y1]``."""

    x0: int
    x1: int
    y0: int
    y1: int

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"empty rectangle {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def contains(self, x, y) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def strictly_contains(self, other: "Rect") -> bool:
        return (self.x0 < other.x0 and other.x1 < self.x1
                and self.y0 < other.y0 and other.y1 < self.y1)

    def points(self):
        for y in range(self.y0, self.y1 + 1):
            for x in range(self.x0, self.x1 + 1):
                yield x, y


@dataclass(frozen=True)
class Annulus:
    """``outer - inner`` with ``inner`` strictly inside ``outer``."""

    outer: Rect
    inner: Rect

    def __post_init__(self):
        if not self.outer.strictly_contains(self.inner):
            raise ValueError("annulus inner rectangle must lie strictly inside the outer one")


@dataclass(frozen=True)
class BoundarySegment:
    """Union of box sides, e.g. ``BoundarySegment("EW")``."""

    sides: str

    def __post_init__(self):
        bad = set(self.sides.upper()) - set(_SIDES)
        if bad or not self.sides:
            raise ValueError(f"sides must be drawn from {_SIDES!r}, got {self.sides!r}")


@dataclass(frozen=True)
class EdgeSet:
    edges: frozenset

    def __init__(self, edges: Iterable[int]):
        object.__setattr__(self, "edges", frozenset(int(e) for e in edges))


Region = Union[Rect, Annulus, BoundarySegment, EdgeSet]


@dataclass(frozen=True, eq=False)
class Lattice:
    """A box ``[0, n] x [0, n']`` or a torus ``Z_n x Z_n'``.

    Use :func:`build_lattice` to construct; arrays are read-only.
    """

    n: int
    n_prime: int
    topology: Topology
    edges: np.ndarray = field(repr=False)  # (E, 2) endpoints

    def __eq__(self, other):
        return (isinstance(other, Lattice) and self.n == other.n
                and self.n_prime == other.n_prime and self.topology == other.topology)

    def __hash__(self):
        return hash((self.n, self.n_prime, self.topology))

    # -- sizes -------------------------------------------------------------
    @property
    def is_torus(self) -> bool:
        return self.topology is Topology.TORUS

    @property
    def cols(self) -> int:
        """Number of vertex columns."""
        return self.n if self.is_torus else self.n + 1

    @property
    def rows(self) -> int:
        return self.n_prime if self.is_torus else self.n_prime + 1

    @property
    def num_vertices(self) -> int:
        return self.cols * self.rows

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_horizontal(self) -> int:
        return self.n * self.rows

    # -- vertex and edge indexing -----------------------------------------
    def vertex(self, x: int, y: int) -> int:
        if self.is_torus:
            return (x % self.n) + self.n * (y % self.n_prime)
        if not (0 <= x <= self.n and 0 <= y <= self.n_prime):
            raise IndexError(f"({x}, {y}) outside box {self.n}x{self.n_prime}")
        return x + (self.n + 1) * y

    def coords(self, v: int) -> tuple[int, int]:
        y, x = divmod(int(v), self.cols)
        return x, y

    @cached_property
    def xy(self) -> np.ndarray:
        v = np.arange(self.num_vertices)
        return np.stack([v % self.cols, v // self.cols], axis=1)

    def horizontal_edge(self, x: int, y: int) -> int:
        """Edge ``(x, y)-(x+1, y)``."""
        if self.is_torus:
            return (x % self.n) + self.n * (y % self.n_prime)
        if not (0 <= x < self.n and 0 <= y <= self.n_prime):
            raise IndexError(f"no horizontal edge at ({x}, {y})")
        return x + self.n * y

    def vertical_edge(self, x: int, y: int) -> int:
        """Edge ``(x, y)-(x, y+1)``."""
        H = self.num_horizontal
        if self.is_torus:
            return H + (x % self.n) + self.n * (y % self.n_prime)
        if not (0 <= x <= self.n and 0 <= y < self.n_prime):
            raise IndexError(f"no vertical edge at ({x}, {y})")
        return H + x + (self.n + 1) * y

    def is_horizontal(self, e: int) -> bool:
        return e < self.num_horizontal

    def edge_base(self, e: int) -> tuple[int, int]:
        """Base point (west or south endpoint) of edge ``e``."""
        H = self.num_horizontal
        if e < H:
            y, x = divmod(e, self.n)
            return x, y
        y, x = divmod(e - H, self.cols)
        return x, y

    def has_edge_at(self, x: int, y: int, horizontal: bool) -> bool:
        if self.is_torus:
            return True
        if horizontal:
            return 0 <= x < self.n and 0 <= y <= self.n_prime
        return 0 <= x <= self.n and 0 <= y < self.n_prime

    def edge_between(self, u: int, v: int) -> int:
        key = (min(u, v), max(u, v))
        try:
            return self._edge_lookup[key]
        except KeyError:
            raise KeyError(f"vertices {u} and {v} are not adjacent") from None

    @cached_property
    def _edge_lookup(self) -> dict:
        return {(int(min(a, b)), int(max(a, b))): i for i, (a, b) in enumerate(self.edges)}

    # -- adjacency (CSR: vertex -> (neighbour, edge)) -----------------------
    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        V = self.num_vertices
        deg = np.bincount(self.edges.ravel(), minlength=V)
        ptr = np.zeros(V + 1, dtype=np.int64)
        np.cumsum(deg, out=ptr[1:])
        nbr = np.empty(ptr[-1], dtype=np.int64)
        eid = np.empty(ptr[-1], dtype=np.int64)
        fill = ptr[:-1].copy()
        for e, (a, b) in enumerate(self.edges):
            nbr[fill[a]] = b
            eid[fill[a]] = e
            fill[a] += 1
            nbr[fill[b]] = a
            eid[fill[b]] = e
            fill[b] += 1
        for arr in (ptr, nbr, eid):
            arr.setflags(write=False)
        return ptr, nbr, eid

    def degree(self, v: int) -> int:
        ptr = self.adjacency[0]
        return int(ptr[v + 1] - ptr[v])

    def neighbors(self, v: int) -> np.ndarray:
        ptr, nbr, _ = self.adjacency
        return nbr[ptr[v]:ptr[v + 1]]

    # -- regions -------------------------------------------------------------
    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Vertices on the outer boundary of a box (all False on a torus)."""
        mask = np.zeros(self.num_vertices, dtype=bool)
        if not self.is_torus:
            x, y = self.xy[:, 0], self.xy[:, 1]
            mask = (x == 0) | (x == self.n) | (y == 0) | (y == self.n_prime)
        mask.setflags(write=False)
        return mask

    def boundary_vertices(self, seg: BoundarySegment | str = "NSEW") -> list[int]:
        return boundary_vertices(self, seg)

    def full_rect(self) -> Rect:
        if self.is_torus:
            return Rect(0, self.n - 1, 0, self.n_prime - 1)
        return Rect(0, self.n, 0, self.n_prime)

    def rect_vertices(self, rect: Rect) -> np.ndarray:
        self._check_rect(rect)
        return np.array(sorted({self.vertex(x, y) for x, y in rect.points()}), dtype=np.int64)

    def annulus_vertices(self, ann: Annulus) -> np.ndarray:
        outer = set(self.rect_vertices(ann.outer).tolist())
        inner = set(self.rect_vertices(ann.inner).tolist())
        return np.array(sorted(outer - inner), dtype=np.int64)

    def rect_edges(self, rect: Rect) -> np.ndarray:
        """Edges with both endpoints in ``rect`` (box only)."""
        self._check_rect(rect)
        out = []
        for x, y in rect.points():
            if x < rect.x1:
                out.append(self.horizontal_edge(x, y))
            if y < rect.y1:
                out.append(self.vertical_edge(x, y))
        return np.array(sorted(set(out)), dtype=np.int64)

    def _check_rect(self, rect: Rect):
        if self.is_torus:
            return
        if not (0 <= rect.x0 and rect.x1 <= self.n and 0 <= rect.y0 and rect.y1 <= self.n_prime):
            raise ValueError(f"{rect} does not fit inside box {self.n}x{self.n_prime}")

    def __repr__(self):
        return f"Lattice({self.n}x{self.n_prime}, {self.topology.value})"


def build_lattice(n: int, n_prime: int, topology: Topology | str = Topology.BOX) -> Lattice:
    """Build a box ``[0,n] x [0,n']`` or torus ``Z_n x Z_n'``.

    A box with ``n' = 0`` is a path (``build_lattice(1, 0)`` is the single
    edge K2); ``n = n' = 0`` is a single vertex. A torus needs ``n, n' >= 3``
    so that the graph is simple.
    """
    topology = Topology(topology)
    n, n_prime = int(n), int(n_prime)
    if topology is Topology.TORUS:
        if n < 3 or n_prime < 3:
            raise ValueError(
                f"torus {n}x{n_prime} is degenerate: both sides must be >= 3 "
                "(smaller sides create loops or parallel edges)")
        cols, rows = n, n_prime
        hx, hy = np.meshgrid(np.arange(n), np.arange(n_prime))
        hx, hy = hx.ravel(), hy.ravel()
        h = np.stack([hx + n * hy, (hx + 1) % n + n * hy], axis=1)
        v = np.stack([hx + n * hy, hx + n * ((hy + 1) % n_prime)], axis=1)
    else:
        if n < 0 or n_prime < 0:
            raise ValueError("box sides must be non-negative")
        cols = n + 1
        hx, hy = np.meshgrid(np.arange(n), np.arange(n_prime + 1))
        hx, hy = hx.ravel(), hy.ravel()
        h = np.stack([hx + cols * hy, hx + 1 + cols * hy], axis=1)
        vx, vy = np.meshgrid(np.arange(n + 1), np.arange(n_prime))
        vx, vy = vx.ravel(), vy.ravel()
        v = np.stack([vx + cols * vy, vx + cols * (vy + 1)], axis=1)
    edges = np.concatenate([h.reshape(-1, 2), v.reshape(-1, 2)]).astype(np.int64)
    edges.setflags(write=False)
    return Lattice(n, n_prime, topology, edges)


def boundary_vertices(lat: Lattice, seg: BoundarySegment | str = "NSEW") -> list[int]:
    """Vertices of the named box sides, corners listed once.

    ``S`` is ``[0,n] x {0}``, ``N`` is ``[0,n] x {n'}``, ``W`` is
    ``{0} x [0,n']`` and ``E`` is ``{n} x [0,n']``. A torus has no boundary
    and returns an empty list.
    """
    sides = seg.sides if isinstance(seg, BoundarySegment) else BoundarySegment(seg).sides
    if lat.is_torus:
        return []
    out = set()
    for s in sides.upper():
        if s == "S":
            out.update(lat.vertex(x, 0) for x in range(lat.n + 1))
        elif s == "N":
            out.update(lat.vertex(x, lat.n_prime) for x in range(lat.n + 1))
        elif s == "W":
            out.update(lat.vertex(0, y) for y in range(lat.n_prime + 1))
        else:
            out.update(lat.vertex(lat.n, y) for y in range(lat.n_prime + 1))
    return sorted(out)


@dataclass(frozen=True, eq=False)
class DualEdgeMap:
    """Bijection between primal edges and the dual edges crossing them.

    The dual vertex ``(X, Y)`` of ``dual`` sits at ``(X + offset + 1/2,
    Y + offset + 1/2)`` in primal coordinates (``offset`` is 0 on a torus and
    -1 on a box, whose dual also has the ring of outer faces). ``to_primal``
    is -1 for dual edges that cross no primal edge.
    """

    primal: Lattice
    dual: Lattice
    offset: int
    to_dual: np.ndarray
    to_primal: np.ndarray

    def dual_config(self, full_state: np.ndarray) -> np.ndarray:
        """``omega*(e*) = 1 - omega(e)``; dual edges crossing nothing are open."""
        out = np.ones(self.dual.num_edges, dtype=np.uint8)
        matched = self.to_primal >= 0
        out[matched] = 1 - full_state[self.to_primal[matched]]
        return out

    def dual_point(self, x: int, y: int) -> tuple[int, int]:
        """Dual-lattice coordinates of the face centred at primal ``(x+1/2, y+1/2)``."""
        return x - self.offset, y - self.offset


def dual_map(lat: Lattice) -> DualEdgeMap:
    if lat.is_torus:
        dual = build_lattice(lat.n, lat.n_prime, Topology.TORUS)
        offset = 0
    else:
        dual = build_lattice(lat.n + 1, lat.n_prime + 1, Topology.BOX)
        offset = -1
    to_dual = np.empty(lat.num_edges, dtype=np.int64)
    for e in range(lat.num_edges):
        x, y = lat.edge_base(e)
        X, Y = x - offset, y - offset
        if lat.is_horizontal(e):
            # faces (x+1/2, y-1/2) and (x+1/2, y+1/2)
            to_dual[e] = dual.vertical_edge(X, Y - 1)
        else:
            # faces (x-1/2, y+1/2) and (x+1/2, y+1/2)
            to_dual[e] = dual.horizontal_edge(X - 1, Y)
    to_primal = np.full(dual.num_edges, -1, dtype=np.int64)
    to_primal[to_dual] = np.arange(lat.num_edges)
    for arr in (to_dual, to_primal):
        arr.setflags(write=False)
    return DualEdgeMap(lat, dual, offset, to_dual, to_primal)
