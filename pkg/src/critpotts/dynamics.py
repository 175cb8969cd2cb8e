"""
Markov chains for the Potts and FK models.

Single-site/-bond heat-bath chains are driven by an :class:`UpdateStream` of
``(J, U, T)`` triples so that several chains can be run on the same
randomness. Swendsen-Wang, Chayes-Machta and block dynamics take a numpy
``Generator``. All step functions update the configuration in place.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from .connectivity import bidirectional_connected, union_find_labels
from .lattice import Annulus, BoundarySegment, EdgeSet, Rect, boundary_vertices
from .model import FKBoundary, Params, PottsBoundary, _color_clusters

BLOCK_EXACT_CAP = 2 ** 20


# --------------------------------------------------------------------------
# update stream

class ScanMode(str, enum.Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class UpdateStream:
    """Replayable sequence of ``(J_i, U_i, T_i)`` triples.

    ``J_i`` indexes one of ``n_locations`` locations uniformly, ``U_i`` is
    uniform on ``[0, 1)`` and ``T_i`` is measured in sweeps: ``i / L`` for the
    discrete random scan, or the arrival times of a rate-``L`` Poisson process
    (rate-1 clock per location) in continuous mode. ``J`` and ``U`` come from
    their own generators, so both modes see the same location/variate
    sequence. Triples are produced in fixed-size blocks, making the sequence
    independent of how callers slice it.
    """

    BLOCK = 1 << 16

    def __init__(self, seed: int, n_locations: int, mode: ScanMode | str = ScanMode.DISCRETE):
        if n_locations < 1:
            raise ValueError("stream needs at least one location")
        self.seed = int(seed)
        self.n_locations = int(n_locations)
        self.mode = ScanMode(mode)
        seqs = np.random.SeedSequence(self.seed).spawn(3)
        self._gj, self._gu, self._gt = (np.random.Generator(np.random.PCG64(s)) for s in seqs)
        self._block_start = 0
        self._J = self._U = self._T = np.empty(0)
        self._t_carry = 0.0
        self._offset = 0
        self._make_block()

    def _make_block(self):
        B, L = self.BLOCK, self.n_locations
        self._block_start += len(self._J)
        self._J = np.minimum((self._gj.random(B) * L).astype(np.int64), L - 1)
        self._U = self._gu.random(B)
        if self.mode is ScanMode.DISCRETE:
            self._T = (self._block_start + np.arange(B)) / L
        else:
            dt = self._gt.exponential(1.0 / L, size=B)
            dt[0] += self._t_carry
            self._T = np.cumsum(dt)
            self._t_carry = float(self._T[-1])
        self._offset = 0

    @property
    def position(self) -> int:
        """Number of triples consumed so far."""
        return self._block_start + self._offset

    def peek_time(self) -> float:
        if self._offset >= len(self._T):
            self._make_block()
        return float(self._T[self._offset])

    def take(self, t_end: float, max_count: int = 1 << 20):
        """Consume the next triples with ``T < t_end`` (at most ``max_count``)."""
        Js, Us, Ts = [], [], []
        got = 0
        while got < max_count:
            if self._offset >= len(self._T):
                self._make_block()
            T = self._T[self._offset:]
            k = int(np.searchsorted(T, t_end, side="left"))
            k = min(k, max_count - got)
            if k == 0:
                break
            sl = slice(self._offset, self._offset + k)
            Js.append(self._J[sl]); Us.append(self._U[sl]); Ts.append(self._T[sl])
            self._offset += k
            got += k
            if self._offset < len(self._T):
                break
        if not Js:
            e = np.empty(0)
            return e.astype(np.int64), e, e
        return np.concatenate(Js), np.concatenate(Us), np.concatenate(Ts)

    def next(self, count: int):
        """Consume exactly ``count`` triples regardless of time."""
        return self.take(math.inf, count)

    def seek(self, position: int):
        """Fast-forward a fresh stream to ``position`` (replays the generators)."""
        if position < self.position:
            raise ValueError("streams only move forward; rebuild from the seed to rewind")
        while self.position < position:
            self.next(min(position - self.position, self.BLOCK))


# --------------------------------------------------------------------------
# chain state and censoring

@dataclass
class ChainState:
    config: np.ndarray
    clock: float = 0.0
    position: int = 0
    approximate: bool = False


@dataclass(frozen=True)
class CensorInterval:
    start: float
    end: float
    region: object = None      # None keeps every update
    reset: int | None = None   # 0/1 sets the region's locations at ``start``
    reset_region: object = None


@dataclass(frozen=True)
class CensorSchedule:
    """Consecutive intervals ``[t_{i-1}, t_i)`` with the region allowed to update."""

    intervals: tuple

    def __init__(self, intervals: Sequence[CensorInterval]):
        iv = tuple(sorted(intervals, key=lambda i: i.start))
        for a, b in zip(iv, iv[1:]):
            if a.end != b.start:
                raise ValueError("censor intervals must be contiguous")
        for i in iv:
            if not i.end > i.start:
                raise ValueError("censor intervals must have positive length")
        object.__setattr__(self, "intervals", iv)

    @property
    def start(self) -> float:
        return self.intervals[0].start

    @property
    def end(self) -> float:
        return self.intervals[-1].end


def _region_vertices(region, lattice) -> np.ndarray:
    mask = np.zeros(lattice.num_vertices, dtype=bool)
    if isinstance(region, Rect):
        mask[lattice.rect_vertices(region)] = True
    elif isinstance(region, Annulus):
        mask[lattice.annulus_vertices(region)] = True
    elif isinstance(region, BoundarySegment):
        mask[boundary_vertices(lattice, region)] = True
    elif isinstance(region, EdgeSet):
        mask[lattice.edges[list(region.edges)].ravel()] = True
    else:
        raise TypeError(f"unsupported region {region!r}")
    return mask


def region_mask(region, lattice, on: str) -> np.ndarray:
    """Vertices (``on="sites"``) or edges (``on="edges"``) covered by ``region``.

    An edge belongs to a vertex region when both endpoints do.
    """
    if on == "edges":
        if isinstance(region, EdgeSet):
            mask = np.zeros(lattice.num_edges, dtype=bool)
            mask[list(region.edges)] = True
            return mask
        vm = _region_vertices(region, lattice)
        return vm[lattice.edges[:, 0]] & vm[lattice.edges[:, 1]]
    if on == "sites":
        return _region_vertices(region, lattice)
    raise ValueError(on)


# --------------------------------------------------------------------------
# heat-bath kernels

def _boltzmann_table(beta: float, max_deg: int) -> np.ndarray:
    d = np.arange(max_deg + 1, dtype=float)
    if math.isinf(beta):
        return (d == 0).astype(float)
    return np.exp(-beta * d)


@nb.njit(cache=True)
def _heat_bath_color(sigma, s, u, ptr, nbr, table, q, counts):
    for k in range(q + 1):
        counts[k] = 0
    top = 0
    for j in range(ptr[s], ptr[s + 1]):
        c = sigma[nbr[j]]
        counts[c] += 1
        if counts[c] > top:
            top = counts[c]
    total = 0.0
    for k in range(1, q + 1):
        total += table[top - counts[k]]
    x = u * total
    acc = 0.0
    for k in range(1, q + 1):
        acc += table[top - counts[k]]
        if x < acc:
            return k
    return q


@nb.njit(cache=True)
def potts_glauber_batch(sigma, J, U, sites, allowed, ptr, nbr, table, q):
    counts = np.zeros(q + 2, dtype=np.int64)
    for i in range(J.shape[0]):
        j = J[i]
        if not allowed[j]:
            continue
        s = sites[j]
        sigma[s] = _heat_bath_color(sigma, s, U[i], ptr, nbr, table, q, counts)


@nb.njit(cache=True)
def fk_glauber_batch(omega, J, U, locs, allowed, edges, ptr, nbr, eid, cls, cptr, cmem,
                     p_lo, p_hi, conn_is_lo, mark, cmark, stamp, qa, qb):
    """Heat-bath bond updates. ``p_lo <= p_hi`` are the two open thresholds;
    ``conn_is_lo`` says whether the connected case uses the lower one
    (true when q < 1). Returns the updated stamp counter."""
    for i in range(J.shape[0]):
        j = J[i]
        if not allowed[j]:
            continue
        e = locs[j]
        u = U[i]
        if u <= p_lo:
            omega[e] = 1
        elif u > p_hi:
            omega[e] = 0
        else:
            stamp += 1
            conn = bidirectional_connected(ptr, nbr, eid, omega, cls, cptr, cmem, e,
                                           edges[e, 0], edges[e, 1], mark, cmark, stamp, qa, qb)
            omega[e] = 1 if conn != conn_is_lo else 0
    return stamp


class _FKWork:
    def __init__(self, bc: FKBoundary):
        V = bc.lattice.num_vertices
        self.mark = np.full(V, -1, dtype=np.int64)
        self.cmark = np.full(V, -1, dtype=np.int64)
        self.qa = np.empty(V, dtype=np.int64)
        self.qb = np.empty(V, dtype=np.int64)
        self.stamp = 0


_WORK_CACHE: dict = {}


def _fk_work(bc):
    key = id(bc)
    w = _WORK_CACHE.get(key)
    if w is None or w[0] is not bc:
        w = (bc, _FKWork(bc))
        if len(_WORK_CACHE) > 64:
            _WORK_CACHE.clear()
        _WORK_CACHE[key] = w
    return w[1]


def _fk_thresholds(params: Params):
    pc, pd = params.p, params.p_isolated
    return min(pc, pd), max(pc, pd), pc < pd


def apply_fk_glauber(omega, J, U, bc: FKBoundary, params: Params, allowed=None):
    lat = bc.lattice
    locs = bc.dynamic_edge_list
    if allowed is None:
        allowed = np.ones(len(locs), dtype=np.bool_)
    ptr, nbr, eid = lat.adjacency
    w = _fk_work(bc)
    lo, hi, conn_lo = _fk_thresholds(params)
    w.stamp = fk_glauber_batch(omega, J, U, locs, allowed, lat.edges, ptr, nbr, eid,
                               bc.cls, bc.class_ptr, bc.class_members, lo, hi, conn_lo,
                               w.mark, w.cmark, w.stamp, w.qa, w.qb)


def apply_potts_glauber(sigma, J, U, bc: PottsBoundary, params: Params, allowed=None):
    lat = bc.lattice
    sites = bc.dynamic_site_list
    if allowed is None:
        allowed = np.ones(len(sites), dtype=np.bool_)
    ptr, nbr, _ = lat.adjacency
    table = _boltzmann_table(params.beta, int(np.diff(ptr).max(initial=0)))
    potts_glauber_batch(sigma, J, U, sites, allowed, ptr, nbr, table, params.q_int)


def potts_glauber_step(state: ChainState, site: int, u: float, bc: PottsBoundary,
                       params: Params) -> ChainState:
    """Heat-bath update of one spin by inverse CDF over colours ``1..q``."""
    if not bc.dynamic_sites[site]:
        raise ValueError(f"site {site} is fixed by the boundary condition")
    j = int(np.searchsorted(bc.dynamic_site_list, site))
    apply_potts_glauber(state.config, np.array([j]), np.array([float(u)]), bc, params)
    return state


def fk_glauber_step(state: ChainState, edge: int, u: float, bc: FKBoundary,
                    params: Params) -> ChainState:
    """Heat-bath update of one bond: open iff ``u <= p`` when the endpoints are
    otherwise connected, iff ``u <= p / (p + q(1-p))`` when they are not."""
    if not bc.dynamic_edges[edge]:
        raise ValueError(f"edge {edge} is fixed by the boundary condition")
    j = int(np.searchsorted(bc.dynamic_edge_list, edge))
    apply_fk_glauber(state.config, np.array([j]), np.array([float(u)]), bc, params)
    return state


# --------------------------------------------------------------------------
# cluster dynamics

@nb.njit(cache=True)
def _sw_kernel(sigma, edges, dyn, fixed_values, cls, fixed_colors, p, q, ue, uv, bonds, parent):
    for e in range(edges.shape[0]):
        if dyn[e]:
            bonds[e] = 1 if (sigma[edges[e, 0]] == sigma[edges[e, 1]] and ue[e] < p) else 0
        else:
            bonds[e] = fixed_values[e]
    union_find_labels(sigma.shape[0], edges, bonds, cls, parent)
    _color_clusters(parent, fixed_colors, q, uv, sigma)


def swendsen_wang_step(sigma: np.ndarray, bc: PottsBoundary, params: Params,
                       rng: np.random.Generator, return_bonds: bool = False):
    """Open agreeing edges with probability ``p``, then recolour each cluster
    uniformly; clusters touching a coloured boundary vertex keep its colour."""
    fk = bc.to_fk()
    lat = bc.lattice
    bonds = np.empty(lat.num_edges, dtype=np.uint8)
    _sw_kernel(sigma, lat.edges, fk.dynamic_edges, fk.fixed_values, fk.cls, bc.colors,
               params.p, params.q_int, rng.random(lat.num_edges), rng.random(lat.num_vertices),
               bonds, np.empty(lat.num_vertices, dtype=np.int64))
    return (sigma, bonds) if return_bonds else sigma


@nb.njit(cache=True)
def _cm_kernel(omega, edges, dyn, cls, p, q, ue, uv, parent):
    union_find_labels(parent.shape[0], edges, omega, cls, parent)
    inv_q = 1.0 / q
    for e in range(edges.shape[0]):
        if dyn[e]:
            ra = parent[edges[e, 0]]
            rb = parent[edges[e, 1]]
            if uv[ra] < inv_q and uv[rb] < inv_q:
                omega[e] = 1 if ue[e] < p else 0


def chayes_machta_step(omega: np.ndarray, bc: FKBoundary, params: Params,
                       rng: np.random.Generator) -> np.ndarray:
    """Activate each cluster with probability ``1/q`` and resample every
    dynamic edge whose endpoints both lie in active clusters.

    Clusters containing wired boundary classes may activate like any other;
    only edges fixed by the boundary condition are never resampled.
    """
    lat = bc.lattice
    _cm_kernel(omega, lat.edges, bc.dynamic_edges, bc.cls, params.p, params.q,
               rng.random(lat.num_edges), rng.random(lat.num_vertices),
               np.empty(lat.num_vertices, dtype=np.int64))
    return omega


# --------------------------------------------------------------------------
# block dynamics

def east_west_blocks(lattice) -> list[Rect]:
    """Two overlapping column blocks ``[0, floor(2n/3)]`` and ``[ceil(n/3), n]``."""
    n, m = lattice.n, lattice.n_prime
    return [Rect(0, (2 * n) // 3, 0, m), Rect(-(-n // 3), n, 0, m)]


def block_sites(region, bc: PottsBoundary) -> np.ndarray:
    """Dynamic sites resampled by a block update on ``region``."""
    return np.flatnonzero(region_mask(region, bc.lattice, "sites") & bc.dynamic_sites)


@nb.njit(cache=True)
def _block_energies(sigma, sites, q, edges_a, edges_b):
    """Agreement count over the given edges for every assignment of ``sites``."""
    m = sites.shape[0]
    N = q ** m
    out = np.empty(N, dtype=np.int64)
    work = sigma.copy()
    for code in range(N):
        c = code
        for j in range(m):
            work[sites[j]] = 1 + c % q
            c //= q
        s = 0
        for i in range(edges_a.shape[0]):
            if work[edges_a[i]] == work[edges_b[i]]:
                s += 1
        out[code] = s
    return out


def block_conditional(sigma, sites, bc: PottsBoundary, params: Params):
    """Exact conditional law of the spins on ``sites`` given the rest.

    Returns ``(probabilities, agreement_counts)`` indexed by the base-``q``
    code of the block assignment (digit ``j`` is ``sigma[sites[j]] - 1``).
    """
    lat = bc.lattice
    inblock = np.zeros(lat.num_vertices, dtype=bool)
    inblock[sites] = True
    a, b = lat.edges[:, 0], lat.edges[:, 1]
    touch = (inblock[a] | inblock[b]) & bc.weighted_edges
    energies = _block_energies(np.asarray(sigma, dtype=np.int64), np.asarray(sites, dtype=np.int64),
                               params.q_int, a[touch], b[touch])
    if math.isinf(params.beta):
        w = (energies == energies.max()).astype(float)
    else:
        w = np.exp(params.beta * (energies - energies.max()))
    return w / w.sum(), energies


def block_dynamics_step(state: ChainState, blocks: Sequence, which: int, bc: PottsBoundary,
                        params: Params, rng: np.random.Generator, exact_cap: int = BLOCK_EXACT_CAP,
                        fallback_sweeps: int | None = None) -> ChainState:
    """Resample the sites of ``blocks[which]`` from their conditional law.

    Blocks with more than ``exact_cap`` assignments are refreshed by
    ``fallback_sweeps`` heat-bath sweeps restricted to the block instead, and
    the state is flagged approximate; without a fallback this is an error.
    """
    q = params.q_int
    sigma = state.config
    sites = block_sites(blocks[which], bc)
    if len(sites) == 0:
        return state
    if q ** len(sites) <= exact_cap:
        prob, _ = block_conditional(sigma, sites, bc, params)
        code = int(np.searchsorted(np.cumsum(prob), rng.random(), side="right"))
        code = min(code, len(prob) - 1)
        for s in sites:
            sigma[s] = 1 + code % q
            code //= q
        return state
    if fallback_sweeps is None:
        raise ValueError(f"block has {q}^{len(sites)} states, above the exact cap {exact_cap}; "
                         "pass fallback_sweeps to use a nested heat-bath chain")
    allowed = np.zeros(len(bc.dynamic_site_list), dtype=np.bool_)
    allowed[np.searchsorted(bc.dynamic_site_list, sites)] = True
    n = fallback_sweeps * len(sites)
    J = np.searchsorted(bc.dynamic_site_list, sites)[rng.integers(0, len(sites), n)]
    apply_potts_glauber(sigma, J, rng.random(n), bc, params, allowed)
    state.approximate = True
    return state


def check_block_cover(blocks: Sequence, bc: PottsBoundary):
    covered = np.zeros(bc.lattice.num_vertices, dtype=bool)
    for b in blocks:
        covered[block_sites(b, bc)] = True
    missing = np.flatnonzero(bc.dynamic_sites & ~covered)
    if len(missing):
        raise ValueError(f"blocks miss dynamic sites {missing[:10].tolist()}")


# --------------------------------------------------------------------------
# driven runs

POTTS_GLAUBER = "potts-glauber"
FK_GLAUBER = "fk-glauber"


def stream_for(kind: str, bc, seed: int, mode: ScanMode | str = ScanMode.DISCRETE) -> UpdateStream:
    n = len(bc.dynamic_site_list) if kind == POTTS_GLAUBER else len(bc.dynamic_edge_list)
    return UpdateStream(seed, n, mode)


def _apply(kind, config, J, U, bc, params, allowed):
    if kind == POTTS_GLAUBER:
        apply_potts_glauber(config, J, U, bc, params, allowed)
    elif kind == FK_GLAUBER:
        apply_fk_glauber(config, J, U, bc, params, allowed)
    else:
        raise ValueError(f"unknown chain kind {kind!r}")


def run(state: ChainState, stream: UpdateStream, until: float, kind: str, bc, params: Params,
        schedule: CensorSchedule | None = None) -> ChainState:
    """Apply the stream's triples with ``state.clock <= T < until``.

    Under a censoring schedule, updates at locations outside the interval's
    region are consumed but skipped, and an interval's reset is applied when
    the run enters it at its start time.
    """
    if stream.position != state.position:
        raise ValueError("stream position does not match the chain state")
    if until < state.clock:
        raise ValueError("cannot run backwards in time")
    on = "sites" if kind == POTTS_GLAUBER else "edges"
    locs = bc.dynamic_site_list if on == "sites" else bc.dynamic_edge_list
    if schedule is None:
        pieces = [CensorInterval(state.clock, until)] if until > state.clock else []
    else:
        if state.clock < schedule.start or until > schedule.end:
            raise ValueError(f"schedule covers [{schedule.start}, {schedule.end}), "
                             f"run needs [{state.clock}, {until})")
        pieces = [iv for iv in schedule.intervals if iv.end > state.clock and iv.start < until]
    lat = bc.lattice
    for iv in pieces:
        if iv.reset is not None and state.clock == iv.start:
            target = region_mask(iv.reset_region if iv.reset_region is not None else iv.region,
                                 lat, on)
            if on == "edges":
                target &= bc.dynamic_edges
                state.config[target] = iv.reset
            else:
                target &= bc.dynamic_sites
                state.config[target] = iv.reset
        allowed = (np.ones(len(locs), dtype=np.bool_) if iv.region is None
                   else region_mask(iv.region, lat, on)[locs])
        stop = min(until, iv.end)
        while True:
            J, U, _ = stream.take(stop)
            if len(J) == 0:
                break
            _apply(kind, state.config, J, U, bc, params, allowed)
        state.clock = stop
    state.position = stream.position
    return state


def run_cluster(state: ChainState, steps: int, kind: str, bc, params: Params,
                rng: np.random.Generator) -> ChainState:
    """``steps`` Swendsen-Wang (``kind="sw"``) or Chayes-Machta (``"cm"``) steps."""
    for _ in range(steps):
        if kind == "sw":
            swendsen_wang_step(state.config, bc, params, rng)
        elif kind == "cm":
            chayes_machta_step(state.config, bc, params, rng)
        else:
            raise ValueError(f"unknown cluster chain {kind!r}")
        state.clock += 1
    return state
