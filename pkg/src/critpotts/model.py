"""
Potts and random-cluster (FK) measures on a box or torus.

Configurations are stored at full length: a spin configuration ``sigma`` is an
integer array over *all* vertices with colours in ``1..q`` and a bond
configuration ``omega`` is a ``uint8`` array over *all* edges. Sites and edges
fixed by a boundary condition simply carry their boundary value; the
boundary objects expose masks saying which entries are dynamic.

* A Potts boundary marks each boundary vertex with a colour or leaves it free.
  Free vertices behave like ordinary spins; a free box is the model on the
  graph with no boundary condition.
* An FK boundary is a partition of the boundary vertices into wired classes.
  Singleton classes impose nothing, so "free" is the partition into
  singletons. An edge whose two endpoints both lie in wired classes is fixed:
  open if they share a class, closed otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numba as nb
import numpy as np

from .connectivity import count_clusters, label_clusters, union_find_labels
from .lattice import Lattice, Rect, boundary_vertices, build_lattice

ENUMERATION_CAP = 2 ** 20
REJECTION_CAP = 10 ** 6


# --------------------------------------------------------------------------
# parameters

def critical_point(q: float) -> tuple[float, float]:
    """Self-dual point ``(p_c, beta_c) = (sqrt q / (1 + sqrt q), log(1 + sqrt q))``."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    s = math.sqrt(q)
    return s / (1.0 + s), math.log1p(s)


def dual_parameter(p: float, q: float) -> float:
    """The planar dual ``p*`` solving ``p p* = q (1-p)(1-p*)``."""
    return q * (1.0 - p) / (p + q * (1.0 - p))


@dataclass(frozen=True)
class Params:
    """Cluster weight ``q`` and edge probability ``p = 1 - exp(-beta)``."""

    q: float
    p: float

    def __post_init__(self):
        if self.q <= 0:
            raise ValueError("q must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    @classmethod
    def from_beta(cls, q: float, beta: float) -> "Params":
        return cls(q, -math.expm1(-beta))

    @classmethod
    def critical(cls, q: float) -> "Params":
        return cls(q, critical_point(q)[0])

    @property
    def beta(self) -> float:
        return math.inf if self.p == 1.0 else -math.log1p(-self.p)

    @property
    def p_isolated(self) -> float:
        """Open probability of an edge whose endpoints are otherwise disconnected."""
        denom = self.p + self.q * (1.0 - self.p)
        return self.p / denom if denom > 0 else 1.0

    @property
    def q_int(self) -> int:
        q = int(round(self.q))
        if q != self.q or q < 2:
            raise ValueError(f"the Potts model needs an integer q >= 2, got {self.q}")
        return q


# --------------------------------------------------------------------------
# boundary conditions

@dataclass(frozen=True, eq=False)
class FKBoundary:
    """Wired classes on the boundary, canonical (min-vertex representatives)."""

    lattice: Lattice
    classes: tuple  # sorted tuple of sorted vertex tuples, sizes >= 2
    periodic: bool = False
    cls: np.ndarray = field(init=False, repr=False)
    class_ptr: np.ndarray = field(init=False, repr=False)
    class_members: np.ndarray = field(init=False, repr=False)
    dynamic_edges: np.ndarray = field(init=False, repr=False)
    fixed_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lat = self.lattice
        V = lat.num_vertices
        cls = np.full(V, -1, dtype=np.int64)
        for c in self.classes:
            cls[list(c)] = c[0]
        ptr = np.zeros(V + 1, dtype=np.int64)
        for c in self.classes:
            ptr[c[0] + 1] = len(c)
        np.cumsum(ptr, out=ptr)
        members = np.array([v for c in self.classes for v in c], dtype=np.int64)
        a, b = lat.edges[:, 0], lat.edges[:, 1]
        fixed = (cls[a] >= 0) & (cls[b] >= 0)
        values = (fixed & (cls[a] == cls[b])).astype(np.uint8)
        for name, arr in (("cls", cls), ("class_ptr", ptr), ("class_members", members),
                          ("dynamic_edges", ~fixed), ("fixed_values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # -- constructors ---------------------------------------------------------
    @classmethod
    def from_partition(cls, lattice: Lattice, classes: Iterable[Iterable[int]]) -> "FKBoundary":
        bnd = set(boundary_vertices(lattice))
        seen = set()
        canon = []
        for c in classes:
            c = tuple(sorted({int(v) for v in c}))
            if not set(c) <= bnd:
                raise ValueError(f"class {c} contains non-boundary vertices")
            if seen & set(c):
                raise ValueError("classes must be disjoint")
            seen |= set(c)
            if len(c) >= 2:
                canon.append(c)
        return cls(lattice, tuple(sorted(canon)))

    @classmethod
    def free(cls, lattice: Lattice) -> "FKBoundary":
        return cls(lattice, (), periodic=lattice.is_torus)

    @classmethod
    def wired(cls, lattice: Lattice) -> "FKBoundary":
        return cls.from_partition(lattice, [boundary_vertices(lattice)])

    @classmethod
    def periodic_bc(cls, lattice: Lattice) -> "FKBoundary":
        if not lattice.is_torus:
            raise ValueError("periodic boundary needs a torus")
        return cls(lattice, (), periodic=True)

    @classmethod
    def wired_sides(cls, lattice: Lattice, sides: str) -> "FKBoundary":
        """Wire the named sides together into one class, e.g. ``"S"``."""
        return cls.from_partition(lattice, [boundary_vertices(lattice, sides)])

    # -- queries ----------------------------------------------------------------
    def __eq__(self, other):
        return (isinstance(other, FKBoundary) and self.lattice == other.lattice
                and self.classes == other.classes and self.periodic == other.periodic)

    def __hash__(self):
        return hash((self.lattice, self.classes, self.periodic))

    @property
    def is_free(self) -> bool:
        return not self.classes

    @property
    def dynamic_edge_list(self) -> np.ndarray:
        return np.flatnonzero(self.dynamic_edges)

    def partition(self) -> list[tuple]:
        """All boundary classes including singletons."""
        wired = {v for c in self.classes for v in c}
        singles = [(v,) for v in boundary_vertices(self.lattice) if v not in wired]
        return sorted(list(self.classes) + singles)

    def extreme_config(self, value: int) -> np.ndarray:
        """All dynamic edges set to ``value``; fixed edges at their boundary value."""
        omega = np.where(self.dynamic_edges, np.uint8(value), self.fixed_values).astype(np.uint8)
        return omega

    def check_config(self, omega: np.ndarray):
        if omega.shape != (self.lattice.num_edges,):
            raise ValueError("bond configuration has the wrong length")
        if np.any(omega[~self.dynamic_edges] != self.fixed_values[~self.dynamic_edges]):
            raise ValueError("bond configuration disagrees with the boundary condition")

    def describe(self) -> str:
        if self.periodic:
            return "periodic"
        if self.is_free:
            return "free"
        if self.classes == (tuple(boundary_vertices(self.lattice)),):
            return "wired"
        return "partition:" + "|".join(",".join(map(str, c)) for c in self.classes)


FREE = 0


@dataclass(frozen=True, eq=False)
class PottsBoundary:
    """Colour (``1..q``) or ``FREE`` (0) for each boundary vertex.

    ``colors`` has one entry per vertex; entries off the boundary are 0.
    """

    lattice: Lattice
    colors: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        colors = np.asarray(self.colors, dtype=np.int64).copy()
        if colors.shape != (self.lattice.num_vertices,):
            raise ValueError("colors must have one entry per vertex")
        if np.any(colors < 0):
            raise ValueError("colours are positive integers (0 marks free)")
        if np.any(colors[~self.lattice.boundary_mask] != 0):
            raise ValueError("only boundary vertices can carry a boundary colour")
        colors.setflags(write=False)
        object.__setattr__(self, "colors", colors)

    @classmethod
    def free(cls, lattice: Lattice) -> "PottsBoundary":
        return cls(lattice, np.zeros(lattice.num_vertices, dtype=np.int64), lattice.is_torus)

    @classmethod
    def periodic_bc(cls, lattice: Lattice) -> "PottsBoundary":
        if not lattice.is_torus:
            raise ValueError("periodic boundary needs a torus")
        return cls(lattice, np.zeros(lattice.num_vertices, dtype=np.int64), True)

    @classmethod
    def from_marking(cls, lattice: Lattice, marking: Mapping[int, int]) -> "PottsBoundary":
        colors = np.zeros(lattice.num_vertices, dtype=np.int64)
        for v, c in marking.items():
            colors[int(v)] = int(c)
        return cls(lattice, colors)

    @classmethod
    def from_sides(cls, lattice: Lattice, sides: Mapping[str, int]) -> "PottsBoundary":
        """Colour whole sides, e.g. ``{"S": 1}``; later sides win at corners."""
        marking = {}
        for s, c in sides.items():
            for v in boundary_vertices(lattice, s):
                marking[v] = c
        return cls.from_marking(lattice, marking)

    @classmethod
    def monochromatic(cls, lattice: Lattice, color: int) -> "PottsBoundary":
        return cls.from_sides(lattice, {"NSEW": color})

    def __eq__(self, other):
        return (isinstance(other, PottsBoundary) and self.lattice == other.lattice
                and np.array_equal(self.colors, other.colors) and self.periodic == other.periodic)

    def __hash__(self):
        return hash((self.lattice, self.colors.tobytes(), self.periodic))

    @property
    def dynamic_sites(self) -> np.ndarray:
        return self.colors == FREE

    @property
    def dynamic_site_list(self) -> np.ndarray:
        return np.flatnonzero(self.colors == FREE)

    @property
    def weighted_edges(self) -> np.ndarray:
        """Edges whose weight depends on the configuration (not both ends coloured)."""
        a, b = self.lattice.edges[:, 0], self.lattice.edges[:, 1]
        return (self.colors[a] == FREE) | (self.colors[b] == FREE)

    def to_fk(self) -> FKBoundary:
        """Wire together boundary vertices sharing a colour."""
        groups = {}
        for v in np.flatnonzero(self.colors):
            groups.setdefault(int(self.colors[v]), []).append(int(v))
        if self.lattice.is_torus:
            return FKBoundary(self.lattice, (), periodic=True)
        return FKBoundary.from_partition(self.lattice, groups.values())

    def check_q(self, q: int):
        if self.colors.max(initial=0) > q:
            raise ValueError(f"boundary colour exceeds q={q}")

    def constant_config(self, color: int) -> np.ndarray:
        return np.where(self.colors == FREE, color, self.colors).astype(np.int64)

    def check_config(self, sigma: np.ndarray, q: int):
        if sigma.shape != (self.lattice.num_vertices,):
            raise ValueError("spin configuration has the wrong length")
        if sigma.min() < 1 or sigma.max() > q:
            raise ValueError("spins must lie in 1..q")
        fixed = self.colors != FREE
        if np.any(sigma[fixed] != self.colors[fixed]):
            raise ValueError("spin configuration disagrees with the boundary colouring")

    def describe(self) -> str:
        if self.periodic:
            return "periodic"
        if not self.colors.any():
            return "free"
        return "colors:" + ",".join(f"{v}={c}" for v, c in enumerate(self.colors) if c)


# --------------------------------------------------------------------------
# weights

def potts_log_weight(sigma: np.ndarray, bc: PottsBoundary, params: Params) -> float:
    """``beta`` times the number of agreeing edges, skipping edges between two
    boundary-coloured vertices (they only contribute a constant)."""
    a, b = bc.lattice.edges[:, 0], bc.lattice.edges[:, 1]
    agree = (sigma[a] == sigma[b]) & bc.weighted_edges
    return params.beta * float(agree.sum())


def potts_weight(sigma: np.ndarray, bc: PottsBoundary, params: Params) -> float:
    return math.exp(potts_log_weight(np.asarray(sigma), bc, params))


def _xlogy(x, y):
    return 0.0 if x == 0 else x * math.log(y)


def fk_log_weight(omega: np.ndarray, bc: FKBoundary, params: Params) -> float:
    """``o log p + c log(1-p) + k log q`` over dynamic edges, with ``k`` counted
    through the boundary wiring. Returns ``-inf`` for zero-weight configs."""
    omega = np.asarray(omega, dtype=np.uint8)
    dyn = bc.dynamic_edges
    o = int(omega[dyn].sum())
    c = int(dyn.sum()) - o
    lat = bc.lattice
    k = count_clusters(lat.num_vertices, lat.edges, omega, bc.cls,
                       np.empty(lat.num_vertices, dtype=np.int64))
    try:
        return _xlogy(o, params.p) + _xlogy(c, 1.0 - params.p) + k * math.log(params.q)
    except ValueError:
        return -math.inf


def fk_weight(omega: np.ndarray, bc: FKBoundary, params: Params) -> float:
    return math.exp(fk_log_weight(omega, bc, params))


# --------------------------------------------------------------------------
# Edwards-Sokal coupling

@nb.njit(cache=True)
def _color_clusters(labels, fixed_colors, q, u, out):
    """Colour clusters: forced colour if the cluster holds a coloured vertex,
    else ``1 + floor(q * u[root])``. Returns False on conflicting colours."""
    V = labels.shape[0]
    forced = np.zeros(V, dtype=np.int64)
    for v in range(V):
        c = fixed_colors[v]
        if c != 0:
            r = labels[v]
            if forced[r] == 0:
                forced[r] = c
            elif forced[r] != c:
                return False
    for v in range(V):
        r = labels[v]
        if forced[r] != 0:
            out[v] = forced[r]
        else:
            out[v] = 1 + min(q - 1, int(q * u[r]))
    return True


@nb.njit(cache=True)
def es_color_batch(omegas, edges, cls, fixed_colors, q, uniforms, out):
    """Batched FK-to-Potts step. Returns the index of the first config
    violating the colouring constraint, or -1."""
    V = fixed_colors.shape[0]
    parent = np.empty(V, dtype=np.int64)
    for i in range(omegas.shape[0]):
        union_find_labels(V, edges, omegas[i], cls, parent)
        if not _color_clusters(parent, fixed_colors, q, uniforms[i], out[i]):
            return i
    return -1


def event_E_zeta(omega: np.ndarray, zeta: PottsBoundary, bc: FKBoundary | None = None) -> bool:
    """No cluster of ``omega`` (with wirings) meets two different boundary colours."""
    if bc is None:
        bc = zeta.to_fk()
    _check_compatible(zeta, bc)
    lab = label_clusters(omega, bc)
    seen = {}
    for v in np.flatnonzero(zeta.colors):
        r = int(lab.labels[v])
        c = int(zeta.colors[v])
        if seen.setdefault(r, c) != c:
            return False
    return True


def _check_compatible(zeta: PottsBoundary, bc: FKBoundary):
    for c in bc.classes:
        cols = {int(zeta.colors[v]) for v in c}
        if len(cols - {FREE}) > 1:
            raise ValueError("a wired class carries two different boundary colours")


def es_fk_to_potts(omega: np.ndarray, zeta: PottsBoundary, q: int, rng: np.random.Generator,
                   bc: FKBoundary | None = None) -> np.ndarray:
    """Colour each cluster uniformly; clusters holding a coloured boundary vertex
    take that colour."""
    bc = zeta.to_fk() if bc is None else bc
    _check_compatible(zeta, bc)
    lab = label_clusters(omega, bc)
    out = np.empty(len(lab.labels), dtype=np.int64)
    ok = _color_clusters(lab.labels, zeta.colors, int(q), rng.random(len(lab.labels)), out)
    if not ok:
        raise ValueError("bond configuration joins two boundary colours; condition on E_zeta first")
    return out


def es_potts_to_fk(sigma: np.ndarray, zeta: PottsBoundary, params: Params,
                   rng: np.random.Generator) -> np.ndarray:
    """Open each dynamic agreeing edge independently with probability ``p``."""
    return es_potts_to_fk_batch(np.asarray(sigma)[None, :], zeta, params, rng)[0]


def es_potts_to_fk_batch(sigmas: np.ndarray, zeta: PottsBoundary, params: Params,
                         rng: np.random.Generator) -> np.ndarray:
    bc = zeta.to_fk()
    a, b = bc.lattice.edges[:, 0], bc.lattice.edges[:, 1]
    agree = sigmas[:, a] == sigmas[:, b]
    u = rng.random(agree.shape)
    open_ = agree & (u < params.p) & bc.dynamic_edges
    open_ |= ~bc.dynamic_edges & (bc.fixed_values == 1)
    return open_.astype(np.uint8)


def es_fk_to_potts_batch(omegas: np.ndarray, zeta: PottsBoundary, q: int,
                         rng: np.random.Generator) -> np.ndarray:
    bc = zeta.to_fk()
    n, V = omegas.shape[0], bc.lattice.num_vertices
    out = np.empty((n, V), dtype=np.int64)
    bad = es_color_batch(np.ascontiguousarray(omegas, dtype=np.uint8), bc.lattice.edges,
                         bc.cls, zeta.colors, int(q), rng.random((n, V)), out)
    if bad >= 0:
        raise ValueError(f"configuration {bad} joins two boundary colours")
    return out


# --------------------------------------------------------------------------
# exact enumeration

@dataclass(frozen=True)
class WeightTable:
    """Enumerated states of a tiny system with unnormalised weights.

    ``codes`` encode the dynamic entries (``locations``) in base ``radix``:
    digit ``j`` is the value at ``locations[j]`` (minus one for spins).
    """

    kind: str
    codes: np.ndarray
    log_weights: np.ndarray
    locations: np.ndarray
    template: np.ndarray
    radix: int

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights - self._shift) * math.exp(self._shift)

    @property
    def _shift(self) -> float:
        return float(self.log_weights.max())

    @property
    def Z(self) -> float:
        return float(self.weights.sum())

    @property
    def log_Z(self) -> float:
        s = self._shift
        return s + math.log(np.exp(self.log_weights - s).sum())

    @property
    def probabilities(self) -> np.ndarray:
        w = np.exp(self.log_weights - self._shift)
        return w / w.sum()

    def __len__(self):
        return len(self.codes)

    def configs(self, idx=None) -> np.ndarray:
        codes = self.codes if idx is None else self.codes[np.atleast_1d(idx)]
        return decode(codes, self.locations, self.template, self.radix, self.kind == "potts")

    def encode(self, configs: np.ndarray) -> np.ndarray:
        configs = np.atleast_2d(configs)
        vals = configs[:, self.locations].astype(np.int64)
        if self.kind == "potts":
            vals = vals - 1
        return vals @ (self.radix ** np.arange(len(self.locations), dtype=np.int64))

    def index(self, codes) -> np.ndarray:
        codes = np.asarray(codes)
        i = np.searchsorted(self.codes, codes)
        i = np.minimum(i, len(self.codes) - 1)
        if np.any(self.codes[i] != codes):
            raise KeyError("configuration not in the enumerated state space")
        return i


def decode(codes, locations, template, radix, spins) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    L = len(locations)
    digits = (codes[:, None] // (radix ** np.arange(L, dtype=np.int64))) % radix
    out = np.repeat(template[None, :], len(codes), axis=0)
    out[:, locations] = digits + (1 if spins else 0)
    return out


def _check_cap(count: int, cap: int):
    if count > cap:
        raise ValueError(f"state space has {count} states, above the enumeration cap {cap}")


def enumerate_potts(bc: PottsBoundary, params: Params, cap: int = ENUMERATION_CAP) -> WeightTable:
    q = params.q_int
    bc.check_q(q)
    locs = bc.dynamic_site_list
    N = q ** len(locs)
    _check_cap(N, cap)
    codes = np.arange(N, dtype=np.int64)
    template = bc.constant_config(1)
    sig = decode(codes, locs, template, q, True)
    a, b = bc.lattice.edges[:, 0], bc.lattice.edges[:, 1]
    w = bc.weighted_edges
    agree = (sig[:, a[w]] == sig[:, b[w]]).sum(axis=1)
    return WeightTable("potts", codes, params.beta * agree.astype(float), locs, template, q)


@nb.njit(cache=True)
def _fk_stats(codes, locs, template, edges, cls, fixed_colors, check_colors):
    """Open-edge count, cluster count and (optionally) the colour-constraint
    indicator for each code."""
    V = cls.shape[0]
    n = codes.shape[0]
    L = locs.shape[0]
    opens = np.empty(n, dtype=np.int64)
    ks = np.empty(n, dtype=np.int64)
    ok = np.ones(n, dtype=np.bool_)
    omega = template.copy()
    parent = np.empty(V, dtype=np.int64)
    forced = np.zeros(V, dtype=np.int64)
    for i in range(n):
        c = codes[i]
        o = 0
        for j in range(L):
            bit = (c >> j) & 1
            omega[locs[j]] = bit
            o += bit
        opens[i] = o
        ks[i] = union_find_labels(V, edges, omega, cls, parent)
        if check_colors:
            for v in range(V):
                forced[v] = 0
            for v in range(V):
                col = fixed_colors[v]
                if col != 0:
                    r = parent[v]
                    if forced[r] == 0:
                        forced[r] = col
                    elif forced[r] != col:
                        ok[i] = False
                        break
    return opens, ks, ok


def fk_log_weights(codes, bc: FKBoundary, params: Params, zeta: PottsBoundary | None = None):
    lat = bc.lattice
    locs = bc.dynamic_edge_list
    template = bc.extreme_config(0)
    colors = zeta.colors if zeta is not None else np.zeros(lat.num_vertices, dtype=np.int64)
    opens, ks, ok = _fk_stats(np.asarray(codes, dtype=np.int64), locs, template, lat.edges,
                              bc.cls, colors, zeta is not None)
    closed = len(locs) - opens
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.where(opens > 0, opens * np.log(params.p) if params.p > 0 else -np.inf, 0.0)
        lq = np.where(closed > 0, closed * np.log1p(-params.p) if params.p < 1 else -np.inf, 0.0)
    lw = lp + lq + ks * math.log(params.q)
    return lw, ok


def enumerate_fk(bc: FKBoundary, params: Params, zeta: PottsBoundary | None = None,
                 cap: int = ENUMERATION_CAP) -> WeightTable:
    """All bond configurations with their FK weights.

    With ``zeta`` the table is conditioned on the event that no cluster joins
    two different boundary colours (zero-weight states are dropped).
    """
    if zeta is not None:
        _check_compatible(zeta, bc)
    locs = bc.dynamic_edge_list
    N = 2 ** len(locs)
    _check_cap(N, cap)
    codes = np.arange(N, dtype=np.int64)
    lw, ok = fk_log_weights(codes, bc, params, zeta)
    keep = ok & np.isfinite(lw)
    return WeightTable("fk", codes[keep], lw[keep], locs, bc.extreme_config(0), 2)


def sample_table(table: WeightTable, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``n`` exact samples from an enumerated table."""
    cdf = np.cumsum(table.probabilities)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(n), side="right")


def sample_fk_conditioned(bc: FKBoundary, zeta: PottsBoundary, params: Params, n: int,
                          rng: np.random.Generator, sampler=None,
                          max_tries: int = REJECTION_CAP) -> np.ndarray:
    """FK samples conditioned on no cluster joining two colours of ``zeta``.

    Without ``sampler`` the conditional law is enumerated exactly (the state
    space must fit under the cap). Otherwise ``sampler(rng)`` must return one
    unconditioned bond configuration and draws are rejected until the
    constraint holds, failing after ``max_tries`` consecutive rejections.
    """
    if sampler is None:
        table = enumerate_fk(bc, params, zeta)
        return table.configs(sample_table(table, n, rng))
    out = np.empty((n, bc.lattice.num_edges), dtype=np.uint8)
    for i in range(n):
        for _ in range(max_tries):
            omega = sampler(rng)
            if event_E_zeta(omega, zeta, bc):
                out[i] = omega
                break
        else:
            raise RuntimeError(f"no admissible configuration after {max_tries} draws")
    return out


# --------------------------------------------------------------------------
# boundary algebra

def modify_boundary(bc: FKBoundary, delta: Iterable[int], mode: str = "class") -> FKBoundary:
    """Remove ``delta`` from every class and re-add it.

    ``mode="class"`` makes ``delta`` one new class (``delta`` equal to the
    whole boundary gives the free condition); ``mode="free"`` leaves the
    ``delta`` vertices as singletons.
    """
    lat = bc.lattice
    delta = {int(v) for v in delta}
    bnd = set(boundary_vertices(lat))
    if not delta <= bnd:
        raise ValueError(f"vertices {sorted(delta - bnd)} are not on the boundary")
    rest = [tuple(v for v in c if v not in delta) for c in bc.classes]
    if mode == "class" and delta != bnd:
        rest.append(tuple(delta))
    elif mode not in ("class", "free"):
        raise ValueError(f"unknown mode {mode!r}")
    return FKBoundary.from_partition(lat, rest)


def induce_boundary(outer_omega: np.ndarray, outer: Lattice, target: Rect) -> FKBoundary:
    """Boundary partition of ``target`` induced by an outer configuration.

    Boundary vertices of ``target`` are wired when the outer configuration,
    restricted to edges avoiding the interior of ``target``, connects them.
    The returned condition lives on a fresh box of the target's size.
    """
    if outer.is_torus:
        raise ValueError("outer lattice must be a box")
    if not (0 < target.x0 and target.x1 < outer.n and 0 < target.y0 and target.y1 < outer.n_prime):
        raise ValueError("target must lie strictly inside the outer box (annulus too thin)")
    xy = outer.xy
    interior = ((xy[:, 0] > target.x0) & (xy[:, 0] < target.x1)
                & (xy[:, 1] > target.y0) & (xy[:, 1] < target.y1))
    a, b = outer.edges[:, 0], outer.edges[:, 1]
    allowed = ~interior[a] & ~interior[b]
    omega = np.asarray(outer_omega, dtype=np.uint8) * allowed
    lab = label_clusters(omega.astype(np.uint8), None, lattice=outer)
    inner = build_lattice(target.width, target.height)
    groups = {}
    for v in boundary_vertices(inner):
        x, y = inner.coords(v)
        r = int(lab.labels[outer.vertex(x + target.x0, y + target.y0)])
        groups.setdefault(r, []).append(v)
    return FKBoundary.from_partition(inner, groups.values())


def boundary_modification_ratio(xi: FKBoundary, xi_prime: FKBoundary, params: Params) -> float:
    """``max_w pi^xi(w)/pi^xi'(w)`` or its inverse, whichever is larger.

    Both measures are taken on configurations of the edges with at least one
    endpoint off the boundary, boundary edges being closed, so that the two
    state spaces coincide whatever the wiring.
    """
    lat = xi.lattice
    bmask = lat.boundary_mask
    a, b = lat.edges[:, 0], lat.edges[:, 1]
    locs = np.flatnonzero(~(bmask[a] & bmask[b]))
    _check_cap(2 ** len(locs), ENUMERATION_CAP)
    codes = np.arange(2 ** len(locs), dtype=np.int64)
    template = np.zeros(lat.num_edges, dtype=np.uint8)
    out = []
    for bc in (xi, xi_prime):
        opens, ks, _ = _fk_stats(codes, locs, template, lat.edges, bc.cls,
                                 np.zeros(lat.num_vertices, dtype=np.int64), False)
        lw = opens * math.log(params.p) + (len(locs) - opens) * math.log1p(-params.p) \
            + ks * math.log(params.q)
        lw = lw - lw.max()
        out.append(lw - math.log(np.exp(lw).sum()))
    return float(math.exp(np.abs(out[0] - out[1]).max()))
