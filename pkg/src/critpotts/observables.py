"""
Event detectors and Monte Carlo estimators on FK and Potts configurations.

Crossings, circuits, torus homology loops (the bottleneck event ``S`` and its
pivotal edges), same-colour Potts loops, one-arm and two-point connection
frequencies, and the colour-count test function.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numba as nb
import numpy as np

from .connectivity import label_clusters, union_find_labels
from .dynamics import chayes_machta_step
from .lattice import Annulus, Lattice, Rect, Topology, build_lattice, dual_map
from .model import FKBoundary, Params

Z95 = 1.959963984540054


class Direction(str, enum.Enum):
    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"


INTERIOR = "interior"
INCLUSIVE = "inclusive"


@dataclass(frozen=True)
class CrossingSpec:
    """A crossing of ``region`` between its south/north (vertical) or
    west/east (horizontal) sides.

    ``mode="interior"`` uses only the edges of the region that do not lie
    along its boundary; ``"inclusive"`` uses every edge with both endpoints in
    the region. With ``dual=True`` the region is in dual-lattice coordinates
    and the event is evaluated on the dual configuration.
    """

    region: Rect
    direction: Direction = Direction.VERTICAL
    dual: bool = False
    mode: str = INTERIOR

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        if self.mode not in (INTERIOR, INCLUSIVE):
            raise ValueError(f"unknown crossing mode {self.mode!r}")


def _lattice_of(obj) -> Lattice:
    return obj if isinstance(obj, Lattice) else obj.lattice


@lru_cache(maxsize=256)
def _crossing_geometry(lat: Lattice, region: Rect, direction: Direction, mode: str):
    """Allowed-edge indices and the two target vertex sets."""
    if lat.is_torus:
        raise ValueError("crossings are defined on box lattices")
    if region.width == 0 or region.height == 0:
        raise ValueError(f"degenerate crossing region {region}")
    lat._check_rect(region)
    edges = lat.rect_edges(region)
    if mode == INTERIOR:
        xy = lat.xy
        a, b = lat.edges[edges, 0], lat.edges[edges, 1]

        def on_bd(v):
            x, y = xy[v, 0], xy[v, 1]
            return (x == region.x0) | (x == region.x1) | (y == region.y0) | (y == region.y1)

        along = on_bd(a) & on_bd(b)
        # an edge joining two different sides (a 1-wide region) still crosses the interior
        ax, ay, bx, by = xy[a, 0], xy[a, 1], xy[b, 0], xy[b, 1]
        same_side = (((ax == region.x0) & (bx == region.x0)) | ((ax == region.x1) & (bx == region.x1))
                     | ((ay == region.y0) & (by == region.y0)) | ((ay == region.y1) & (by == region.y1)))
        edges = edges[~(along & same_side)]
    if direction is Direction.VERTICAL:
        A = [lat.vertex(x, region.y0) for x in range(region.x0, region.x1 + 1)]
        B = [lat.vertex(x, region.y1) for x in range(region.x0, region.x1 + 1)]
    else:
        A = [lat.vertex(region.x0, y) for y in range(region.y0, region.y1 + 1)]
        B = [lat.vertex(region.x1, y) for y in range(region.y0, region.y1 + 1)]
    return edges, np.array(A, dtype=np.int64), np.array(B, dtype=np.int64)


@nb.njit(cache=True)
def _sets_joined(n_vertices, edges, allowed, omega, A, B, parent):
    for v in range(n_vertices):
        parent[v] = v
    for k in range(allowed.shape[0]):
        e = allowed[k]
        if omega[e]:
            a = edges[e, 0]
            b = edges[e, 1]
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            while parent[b] != b:
                parent[b] = parent[parent[b]]
                b = parent[b]
            if a != b:
                if a < b:
                    parent[b] = a
                else:
                    parent[a] = b
    for i in range(A.shape[0]):
        x = A[i]
        while parent[x] != x:
            x = parent[x]
        for j in range(B.shape[0]):
            y = B[j]
            while parent[y] != y:
                y = parent[y]
            if x == y:
                return True
    return False


def detect_crossing(omega: np.ndarray, spec: CrossingSpec, bc) -> bool:
    """Whether ``omega`` (or its dual, if ``spec.dual``) crosses ``spec.region``.

    ``bc`` is a boundary condition or lattice; it supplies the primal lattice.
    """
    lat = _lattice_of(bc)
    omega = np.asarray(omega, dtype=np.uint8)
    if spec.dual:
        dm = dual_map(lat)
        omega = dm.dual_config(omega)
        lat = dm.dual
    allowed, A, B = _crossing_geometry(lat, spec.region, spec.direction, spec.mode)
    parent = np.empty(lat.num_vertices, dtype=np.int64)
    return bool(_sets_joined(lat.num_vertices, lat.edges, allowed, omega, A, B, parent))


def dual_crossing_spec(spec: CrossingSpec) -> CrossingSpec:
    """The dual event complementary to a primal crossing on a box.

    A primal crossing of ``R = [x0, x1] x [y0, y1]`` in one direction fails
    exactly when the dual configuration crosses the returned rectangle (dual
    coordinates, interior mode) in the other direction.
    """
    if spec.dual:
        raise ValueError("expected a primal crossing")
    R = spec.region
    if spec.mode == INCLUSIVE:
        D = Rect(R.x0, R.x1 + 1, R.y0, R.y1 + 1)
    elif spec.direction is Direction.HORIZONTAL:
        D = Rect(R.x0, R.x1 + 1, R.y0 + 1, R.y1)
    else:
        D = Rect(R.x0 + 1, R.x1, R.y0, R.y1 + 1)
    other = Direction.VERTICAL if spec.direction is Direction.HORIZONTAL else Direction.HORIZONTAL
    return CrossingSpec(D, other, dual=True, mode=INTERIOR)


# --------------------------------------------------------------------------
# circuits

@lru_cache(maxsize=64)
def _circuit_geometry(lat: Lattice, annulus: Annulus):
    if lat.is_torus:
        raise ValueError("circuits are defined on box lattices")
    inA = np.zeros(lat.num_vertices, dtype=bool)
    inA[lat.annulus_vertices(annulus)] = True
    inner = np.zeros(lat.num_vertices, dtype=bool)
    inner[lat.rect_vertices(annulus.inner)] = True
    outer = np.zeros(lat.num_vertices, dtype=bool)
    outer[lat.rect_vertices(annulus.outer)] = True
    # boundary of A: vertices of A next to a vertex outside A (or on the box edge)
    bdA = np.zeros(lat.num_vertices, dtype=bool)
    ptr, nbr, _ = lat.adjacency
    for v in np.flatnonzero(inA):
        x, y = lat.coords(v)
        if not annulus.outer.contains(x, y) or x in (annulus.outer.x0, annulus.outer.x1) \
                or y in (annulus.outer.y0, annulus.outer.y1):
            bdA[v] = True
        if np.any(~inA[nbr[ptr[v]:ptr[v + 1]]]):
            bdA[v] = True
    core = inA & ~bdA
    usable = core[lat.edges[:, 0]] & core[lat.edges[:, 1]]
    dm = dual_map(lat)
    D = dm.dual
    # dual vertex (X, Y) is the face with primal corners X-1..X, Y-1..Y
    src = np.zeros(D.num_vertices, dtype=bool)
    dst = np.zeros(D.num_vertices, dtype=bool)
    for w in range(D.num_vertices):
        X, Y = D.coords(w)
        for x in (X - 1, X):
            for y in (Y - 1, Y):
                if 0 <= x <= lat.n and 0 <= y <= lat.n_prime:
                    v = lat.vertex(x, y)
                    src[w] |= inner[v]
                    dst[w] |= not outer[v]
                else:
                    dst[w] = True
    return usable, dm, np.flatnonzero(src), np.flatnonzero(dst)


def detect_circuit(omega: np.ndarray, annulus: Annulus, bc) -> bool:
    """Whether an open circuit in ``A - dA`` separates the inner rectangle of
    the annulus from the outside.

    Planar criterion: such a circuit exists iff no dual path avoiding the
    open edges of ``A - dA`` joins a face touching the inner rectangle to a
    face touching the outside of the annulus.
    """
    lat = _lattice_of(bc)
    usable, dm, src, dst = _circuit_geometry(lat, annulus)
    omega = np.asarray(omega, dtype=np.uint8)
    blocked = (omega.astype(bool) & usable).astype(np.uint8)
    star = dm.dual_config(blocked)
    parent = np.empty(dm.dual.num_vertices, dtype=np.int64)
    every = np.arange(dm.dual.num_edges, dtype=np.int64)
    return not _sets_joined(dm.dual.num_vertices, dm.dual.edges, every, star, src, dst, parent)


# --------------------------------------------------------------------------
# torus loops

@nb.njit(cache=True)
def _winding_find(parent, off, x):
    # returns root, with off[x] updated to the displacement of x from the root
    r = x
    acc = 0
    while parent[r] != r:
        acc += off[r]
        r = parent[r]
    # path compression
    y = x
    rem = acc
    while parent[y] != y:
        nxt = parent[y]
        d = off[y]
        parent[y] = r
        off[y] = rem
        rem -= d
        y = nxt
    return r


@nb.njit(cache=True)
def _strip_wraps(omega, eu, ev, ed, skip, parent, off):
    """Does the graph of open strip edges contain a cycle of nonzero winding?

    ``eu, ev`` are endpoint vertex ids, ``ed`` the lifted displacement along
    the wrapping axis (0 or 1) and ``omega`` the per-edge open flags.
    """
    for i in range(parent.shape[0]):
        parent[i] = i
        off[i] = 0
    for k in range(eu.shape[0]):
        if k == skip or omega[k] == 0:
            continue
        a = eu[k]
        b = ev[k]
        ra = _winding_find(parent, off, a)
        rb = _winding_find(parent, off, b)
        # want pos(b) - pos(a) = ed[k]
        if ra == rb:
            if off[b] - off[a] != ed[k]:
                return True
        else:
            # attach rb under ra: pos(rb) = pos(b) - off[b] = pos(a) + ed - off[b]
            parent[rb] = ra
            off[rb] = off[a] + ed[k] - off[b]
    return False


@dataclass(frozen=True)
class _Strip:
    edges: np.ndarray   # lattice edge ids
    eu: np.ndarray      # local endpoint ids
    ev: np.ndarray
    ed: np.ndarray
    n_local: int


@lru_cache(maxsize=64)
def _strips(lat: Lattice, strips: int = 3):
    """Vertical strips ``[(i-1)n/3, in/3] x [0, n']`` and the horizontal ones."""
    if not lat.is_torus:
        raise ValueError("torus loop events need a torus")
    n, m = lat.n, lat.n_prime
    if n % strips or m % strips:
        raise ValueError(f"torus sides {n}x{m} must be divisible by {strips}")
    out = []
    for axis in ("v", "h"):
        size, other = (n, m) if axis == "v" else (m, n)
        w = size // strips
        for i in range(strips):
            cols = [(i * w + k) % size for k in range(w + 1)]
            local = {}

            def vid(c, t):
                x, y = (c, t) if axis == "v" else (t, c)
                v = lat.vertex(x, y)
                if v not in local:
                    local[v] = len(local)
                return local[v]

            E, U, Vv, D = [], [], [], []
            for t in range(other):
                for k, c in enumerate(cols):
                    # along the wrapping axis: (c, t) -> (c, t+1)
                    e = lat.vertical_edge(c, t) if axis == "v" else lat.horizontal_edge(t, c)
                    E.append(e); U.append(vid(c, t)); Vv.append(vid(c, (t + 1) % other)); D.append(1)
                    if k + 1 < len(cols):
                        e = lat.horizontal_edge(c, t) if axis == "v" else lat.vertical_edge(t, c)
                        E.append(e); U.append(vid(c, t)); Vv.append(vid(cols[k + 1], t)); D.append(0)
            out.append(_Strip(np.array(E, dtype=np.int64), np.array(U, dtype=np.int64),
                              np.array(Vv, dtype=np.int64), np.array(D, dtype=np.int64), len(local)))
    return tuple(out)


@dataclass(frozen=True)
class LoopEvents:
    vertical: tuple      # S_v^1..S_v^3
    horizontal: tuple    # S_h^1..S_h^3

    @property
    def S(self) -> bool:
        return all(self.vertical) and all(self.horizontal)

    def as_tuple(self) -> tuple:
        return tuple(self.vertical) + tuple(self.horizontal)


def _strip_events(open_edges: np.ndarray, lat: Lattice, strips: int = 3) -> LoopEvents:
    res = []
    for st in _strips(lat, strips):
        parent = np.empty(st.n_local, dtype=np.int64)
        off = np.empty(st.n_local, dtype=np.int64)
        res.append(bool(_strip_wraps(open_edges[st.edges], st.eu, st.ev, st.ed, -1, parent, off)))
    return LoopEvents(tuple(res[:strips]), tuple(res[strips:]))


def torus_loop_events(omega: np.ndarray, lattice: Lattice, strips: int = 3) -> LoopEvents:
    """Strip events ``S_v^i`` (an open loop of class (0,1) inside vertical
    strip ``i``) and ``S_h^i`` (class (1,0) inside horizontal strip ``i``).

    A strip event holds when the open edges inside the strip contain a loop
    winding once around the torus; ``S`` is the conjunction of all six.
    """
    return _strip_events(np.asarray(omega, dtype=np.uint8), lattice, strips)


@nb.njit(cache=True)
def _pivotal_in_strip(omega_s, eu, ev, ed, parent, off, out):
    m = 0
    for k in range(eu.shape[0]):
        if omega_s[k] and not _strip_wraps(omega_s, eu, ev, ed, k, parent, off):
            out[m] = k
            m += 1
    return m


def pivotal_edges_for_S(omega: np.ndarray, lattice: Lattice, strips: int = 3) -> np.ndarray:
    """Open edges ``e`` with ``omega - {e}`` outside ``S`` (sorted edge ids)."""
    omega = np.asarray(omega, dtype=np.uint8)
    if not _strip_events(omega, lattice, strips).S:
        raise ValueError("configuration is not in S")
    piv = set()
    for st in _strips(lattice, strips):
        parent = np.empty(st.n_local, dtype=np.int64)
        off = np.empty(st.n_local, dtype=np.int64)
        buf = np.empty(len(st.edges), dtype=np.int64)
        m = _pivotal_in_strip(omega[st.edges], st.eu, st.ev, st.ed, parent, off, buf)
        piv.update(st.edges[buf[:m]].tolist())
    return np.array(sorted(piv), dtype=np.int64)


def potts_loop_events(sigma: np.ndarray, lattice: Lattice, color: int,
                      strips: int = 3) -> LoopEvents:
    """Strip loop events for the sites of colour ``color``: an edge counts as
    open when both endpoints carry that colour."""
    sigma = np.asarray(sigma)
    e = lattice.edges
    same = ((sigma[e[:, 0]] == color) & (sigma[e[:, 1]] == color)).astype(np.uint8)
    return _strip_events(same, lattice, strips)


# --------------------------------------------------------------------------
# estimators

def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("Wilson interval needs n > 0")
    ph = k / n
    den = 1.0 + z * z / n
    c = (ph + z * z / (2 * n)) / den
    h = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(0.0, c - h), min(1.0, c + h)


@dataclass(frozen=True)
class Estimate:
    value: float
    lo: float
    hi: float
    count: int
    trials: int

    @classmethod
    def of(cls, k: int, n: int) -> "Estimate":
        lo, hi = wilson_interval(k, n)
        return cls(k / n, lo, hi, int(k), int(n))

    @property
    def stderr(self) -> float:
        return math.sqrt(max(self.value * (1 - self.value), 1e-300) / self.trials)


class NoDataType:
    """Marker for an estimate with no conditioning samples."""

    def __repr__(self):
        return "NoData"

    def __bool__(self):
        return False


NoData = NoDataType()


@dataclass(frozen=True)
class ConfigBottleneck:
    in_S: bool
    pivotal_edges: np.ndarray

    @property
    def in_boundary(self) -> bool:
        return len(self.pivotal_edges) > 0


def analyze_bottleneck(omega: np.ndarray, lattice: Lattice) -> ConfigBottleneck:
    ev = torus_loop_events(omega, lattice)
    if not ev.S:
        return ConfigBottleneck(False, np.empty(0, dtype=np.int64))
    return ConfigBottleneck(True, pivotal_edges_for_S(omega, lattice))


@dataclass(frozen=True)
class BottleneckReport:
    """``pi(S)`` and ``pi(dS | S)`` estimated from ``samples`` configurations."""

    n: int
    samples: int
    pi_S: Estimate
    boundary_given_S: Estimate | NoDataType
    seed: int

    @property
    def in_S(self) -> int:
        return self.pi_S.count


@dataclass(frozen=True)
class SamplerSettings:
    burn_in: int = 200
    thin: int = 5
    per_replica: int = 20


def fk_samples(bc: FKBoundary, params: Params, replicas: int, seed: int,
               settings: SamplerSettings = SamplerSettings(), starts=("open", "closed")):
    """Approximate equilibrium FK samples from Chayes-Machta chains.

    Replica ``r`` starts all-open or all-closed (cycling through ``starts``),
    runs ``burn_in`` steps and then yields ``per_replica`` configurations
    ``thin`` steps apart.
    """
    seqs = np.random.SeedSequence(seed).spawn(replicas)
    for r in range(replicas):
        rng = np.random.Generator(np.random.PCG64(seqs[r]))
        omega = bc.extreme_config(1 if starts[r % len(starts)] == "open" else 0)
        for _ in range(settings.burn_in):
            chayes_machta_step(omega, bc, params, rng)
        for _ in range(settings.per_replica):
            for _ in range(settings.thin):
                chayes_machta_step(omega, bc, params, rng)
            yield omega.copy()


def estimate_conductance_bottleneck(params: Params, n: int, replicas: int, seed: int,
                                    settings: SamplerSettings = SamplerSettings(),
                                    starts=("open", "closed")) -> BottleneckReport:
    """Estimate ``pi(S)`` and ``pi(dS | S)`` on the ``n x n`` torus.

    ``dS`` is the set of configurations in ``S`` with a pivotal edge; the
    conditional frequency bounds the conductance of ``S`` from above. When no
    sample lands in ``S`` the conditional estimate is ``NoData``.
    """
    lat = build_lattice(n, n, Topology.TORUS)
    bc = FKBoundary.periodic_bc(lat)
    total = inS = onB = 0
    for omega in fk_samples(bc, params, replicas, seed, settings, starts):
        total += 1
        res = analyze_bottleneck(omega, lat)
        if res.in_S:
            inS += 1
            onB += res.in_boundary
    cond = Estimate.of(onB, inS) if inS else NoData
    return BottleneckReport(n, total, Estimate.of(inS, total), cond, seed)


def box_center(lattice: Lattice) -> int:
    if lattice.n % 2 or lattice.n_prime % 2:
        raise ValueError("one-arm events need even box sides")
    return lattice.vertex(lattice.n // 2, lattice.n_prime // 2)


def one_arm_probability(params: Params, n: int, bc: str | FKBoundary = "free",
                        replicas: int = 10, seed: int = 0,
                        settings: SamplerSettings = SamplerSettings()) -> Estimate:
    """Frequency of the centre of an ``n x n`` box joining the box boundary.

    The centred box ``[-n/2, n/2]^2`` is the lattice ``[0, n]^2`` shifted so
    that the origin is the vertex ``(n/2, n/2)``.
    """
    if isinstance(bc, str):
        lat = build_lattice(n, n)
        bc = FKBoundary.free(lat) if bc == "free" else FKBoundary.wired(lat)
    lat = bc.lattice
    c = box_center(lat)
    border = np.flatnonzero(lat.boundary_mask)
    plain = FKBoundary.free(lat)
    hits = total = 0
    for omega in fk_samples(bc, params, replicas, seed, settings):
        # wirings are a boundary condition, not paths, so test connectivity in omega only
        lab = label_clusters(omega, plain)
        hits += bool(np.any(lab.labels[border] == lab.labels[c]))
        total += 1
    return Estimate.of(hits, total)


def two_point_correlation(params: Params, n: int, bc: str | FKBoundary, pairs,
                          replicas: int = 10, seed: int = 0, eps: float = 0.0,
                          settings: SamplerSettings = SamplerSettings()) -> list[tuple]:
    """Connection frequency ``pi(x <-> y)`` for each vertex pair.

    Pairs are ``((x1, y1), (x2, y2))`` in lattice coordinates and must lie at
    least ``eps * n`` from the box boundary. Returns ``(pair, Estimate)`` rows.
    """
    if isinstance(bc, str):
        lat = build_lattice(n, n)
        bc = FKBoundary.free(lat) if bc == "free" else FKBoundary.wired(lat)
    lat = bc.lattice
    margin = eps * n
    ids = []
    for a, b in pairs:
        for x, y in (a, b):
            if min(x, y, lat.n - x, lat.n_prime - y) < margin:
                raise ValueError(f"point {(x, y)} is within {margin} of the boundary")
        ids.append((lat.vertex(*a), lat.vertex(*b)))
    hits = np.zeros(len(ids), dtype=np.int64)
    total = 0
    for omega in fk_samples(bc, params, replicas, seed, settings):
        lab = label_clusters(omega, bc)
        for i, (u, v) in enumerate(ids):
            hits[i] += lab.labels[u] == lab.labels[v]
        total += 1
    return [(pairs[i], Estimate.of(int(hits[i]), total)) for i in range(len(ids))]


def variance_test_function(sigma: np.ndarray, inner: Rect, color: int, lattice: Lattice) -> int:
    """Number of vertices of ``inner`` carrying colour ``color``."""
    return int(np.count_nonzero(np.asarray(sigma)[lattice.rect_vertices(inner)] == color))


# --------------------------------------------------------------------------
# stitching preset

@dataclass(frozen=True)
class StitchEvent:
    name: str
    kind: str          # "open-segment", "vertical", "horizontal" or "circuit"
    region: object


def stitching_preset(n: int, n_prime: int, eps: float, delta: float,
                     alpha: float | None = None) -> list[StitchEvent]:
    """Rectangles ``R_0 .. R_2K`` and the annulus ``A_1`` of the stitching
    construction on ``[0, n] x [0, n']``, rounded to lattice points.

    ``R_0`` is the horizontal segment of length ``2 log n`` at height
    ``n'/2`` (event: all its edges open); odd rectangles carry vertical
    crossings and even ones horizontal crossings, all anchored at
    ``x = 0, y = n'/2``. Rectangles that leave the box or round to zero width
    or height are dropped.
    """
    if alpha is None:
        alpha = n_prime / n
    L = math.log(n)
    h = n_prime // 2
    out = [StitchEvent("R0", "open-segment", Rect(0, min(n, int(round(2 * L))), h, h))]
    K = int(math.floor(math.log2(eps * n / L))) if eps * n > L else 0
    for k in range(1, K + 1):
        top = h + int(round(2 ** (k + 1) * alpha * L))
        x0 = int(round((2 ** k - 1) * L))
        for name, x1, kind in ((f"R{2 * k - 1}", int(round((3 * 2 ** (k - 1) - 1) * L)), "vertical"),
                               (f"R{2 * k}", int(round((3 * 2 ** k - 1) * L)), "horizontal")):
            if x1 <= x0 or top <= h or x1 > n or top > n_prime:
                continue
            out.append(StitchEvent(name, kind, Rect(x0, x1, h, top)))
    outer = Rect(0, n, int(round((0.5 - delta) * n_prime)), int(round((0.5 + delta) * n_prime)))
    inner = Rect(int(round(eps * n)), int(round((1 - eps) * n)),
                 int(round((0.5 - 3 * eps) * n_prime)), int(round((0.5 + 3 * eps) * n_prime)))
    if outer.strictly_contains(inner):
        out.append(StitchEvent("A1", "circuit", Annulus(outer, inner)))
    return out


def stitch_event_holds(omega: np.ndarray, ev: StitchEvent, lattice: Lattice,
                       mode: str = INTERIOR) -> bool:
    if ev.kind == "open-segment":
        return bool(np.all(np.asarray(omega)[lattice.rect_edges(ev.region)] == 1))
    if ev.kind == "circuit":
        return detect_circuit(omega, ev.region, lattice)
    return detect_crossing(omega, CrossingSpec(ev.region, Direction(ev.kind), mode=mode), lattice)
