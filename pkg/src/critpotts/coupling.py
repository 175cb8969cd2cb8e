"""
Grand coupling of FK heat-bath chains from the extreme configurations.

The upper chain starts all-open and the lower chain all-closed; both consume
the same ``(J, U, T)`` triples. For ``q >= 1`` the heat-bath rule is monotone,
so any other start stays sandwiched and has merged once the extremes agree.
Potts chains are deliberately not offered here: single-site Potts dynamics is
not monotone for ``q >= 3``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .connectivity import bidirectional_connected
from .dynamics import UpdateStream
from .lattice import Topology, build_lattice
from .model import FKBoundary, Params


class SandwichViolation(AssertionError):
    pass


@nb.njit(cache=True, nogil=True)
def _coupled_batch(up, lo, mid, has_mid, J, U, locs, edges, ptr, nbr, eid, cls, cptr, cmem,
                   p_open, p_iso, mark, cmark, stamp, qa, qb, disagree, check):
    """Drive ``up``/``lo`` (and ``mid`` when ``has_mid``) through ``J, U``.

    Returns ``(stamp, disagree, k, violation)`` where ``k`` is the number of
    triples consumed: the batch stops right after the update that makes the
    chains agree. ``violation`` is the index of the first triple that broke
    the sandwich order (only checked when ``check``), else -1.
    """
    n = J.shape[0]
    for i in range(n):
        e = locs[J[i]]
        u = U[i]
        before = up[e] != lo[e]
        if u <= p_iso:
            up[e] = 1
            lo[e] = 1
            if has_mid:
                mid[e] = 1
        elif u > p_open:
            up[e] = 0
            lo[e] = 0
            if has_mid:
                mid[e] = 0
        else:
            a = edges[e, 0]
            b = edges[e, 1]
            # the lower chain has fewer connections: if it connects, so do the others
            stamp += 1
            lc = bidirectional_connected(ptr, nbr, eid, lo, cls, cptr, cmem, e, a, b,
                                         mark, cmark, stamp, qa, qb)
            if lc:
                uc = True
                mc = True
            else:
                stamp += 1
                uc = bidirectional_connected(ptr, nbr, eid, up, cls, cptr, cmem, e, a, b,
                                             mark, cmark, stamp, qa, qb)
                mc = False
                if has_mid and uc:
                    stamp += 1
                    mc = bidirectional_connected(ptr, nbr, eid, mid, cls, cptr, cmem, e, a, b,
                                                 mark, cmark, stamp, qa, qb)
            up[e] = 1 if uc else 0
            lo[e] = 1 if lc else 0
            if has_mid:
                mid[e] = 1 if mc else 0
        after = up[e] != lo[e]
        if before and not after:
            disagree -= 1
        elif after and not before:
            disagree += 1
        if check:
            if lo[e] > up[e] or (has_mid and (mid[e] > up[e] or mid[e] < lo[e])):
                return stamp, disagree, i + 1, i
        if disagree == 0:
            return stamp, disagree, i + 1, -1
    return stamp, disagree, n, -1


@dataclass
class CouplingRun:
    """Outcome of one grand-coupling run.

    ``coalescence`` is the time (in sweeps) of the update after which the
    chains agree, or ``None`` when they had not met by ``t_max``. ``trace``
    holds the fraction of dynamic edges on which the chains agree at each
    time in ``times`` (taken after all updates with ``T < times[k]``).
    """

    upper: np.ndarray
    lower: np.ndarray
    coalescence: float | None
    t_max: float
    times: np.ndarray
    trace: np.ndarray
    steps: int
    seed: int
    third: np.ndarray | None = None

    @property
    def coalesced(self) -> bool:
        return self.coalescence is not None

    def coalesced_by(self, t) -> np.ndarray:
        """Indicator of coalescence by time ``t`` (elementwise)."""
        t = np.asarray(t, dtype=float)
        if self.coalescence is None:
            return np.zeros(t.shape, dtype=bool)
        return self.coalescence < t


def grand_coupling_run(bc: FKBoundary, params: Params, stream: UpdateStream, t_max: float,
                       third: np.ndarray | None = None, check: bool = False,
                       trace_every: float = 1.0) -> CouplingRun:
    """Run the all-open and all-closed FK heat-bath chains on one stream.

    ``third`` (optional) is an extra starting configuration driven alongside;
    with ``check=True`` the order ``lower <= third <= upper`` is verified after
    every update and a :class:`SandwichViolation` is raised on failure. The
    run stops at coalescence or when the stream reaches ``t_max``.
    """
    if params.q < 1:
        raise ValueError("the grand coupling needs q >= 1 (monotone heat-bath rule)")
    locs = bc.dynamic_edge_list
    if stream.n_locations != len(locs) and len(locs) > 0:
        raise ValueError("stream locations must be the dynamic edges of the boundary condition")
    if stream.position != 0:
        raise ValueError("grand_coupling_run needs a fresh stream")
    lat = bc.lattice
    up = bc.extreme_config(1)
    lo = bc.extreme_config(0)
    has_mid = third is not None
    mid = np.array(third, dtype=np.uint8) if has_mid else np.zeros(1, dtype=np.uint8)
    if has_mid:
        bc.check_config(mid)
    ptr, nbr, eid = lat.adjacency
    V = lat.num_vertices
    mark = np.full(V, -1, dtype=np.int64)
    cmark = np.full(V, -1, dtype=np.int64)
    qa = np.empty(V, dtype=np.int64)
    qb = np.empty(V, dtype=np.int64)
    stamp = 0
    n_dyn = len(locs)
    disagree = int(np.count_nonzero(up != lo))
    p_open, p_iso = params.p, params.p_isolated

    grid = np.arange(trace_every, t_max + 0.5 * trace_every, trace_every)
    trace = np.ones(len(grid))
    coal = 0.0 if disagree == 0 else None
    steps = 0
    for k, t in enumerate(grid):
        if coal is not None:
            break
        while True:
            J, U, T = stream.take(t)
            if len(J) == 0:
                break
            stamp, disagree, used, bad = _coupled_batch(
                up, lo, mid, has_mid, J, U, locs, lat.edges, ptr, nbr, eid, bc.cls,
                bc.class_ptr, bc.class_members, p_open, p_iso, mark, cmark, stamp, qa, qb,
                disagree, check)
            steps += used
            if bad >= 0:
                raise SandwichViolation(f"order broken at update {steps} (time {T[bad]})")
            if disagree == 0:
                coal = float(T[used - 1])
                break
        trace[k] = 1.0 - disagree / n_dyn if n_dyn else 1.0
    return CouplingRun(up, lo, coal, float(t_max), grid, trace, steps, stream.seed,
                       mid if has_mid else None)


# --------------------------------------------------------------------------
# TV bound

@dataclass(frozen=True)
class TVBound:
    """``2|E| * P(not coalesced by t)``; ``clipped`` marks values capped at 1."""

    times: np.ndarray
    bound: np.ndarray
    raw: np.ndarray
    uncoalesced: np.ndarray
    replicas: int

    @property
    def clipped(self) -> np.ndarray:
        return self.raw > 1.0


def tv_upper_bound(runs, lattice, times) -> TVBound:
    """High-probability proxy for the worst-case TV distance at ``times``.

    The fraction of replicas whose extreme chains have not met estimates an
    upper bound on the TV distance between the two extreme starts; the factor
    ``2|E|`` converts that to all initial conditions. This is an upper-bound
    estimator, not the TV distance itself.
    """
    runs = list(runs)
    if not runs:
        raise ValueError("tv_upper_bound needs at least one replica")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    hit = np.array([r.coalesced_by(times) for r in runs])
    frac = 1.0 - hit.mean(axis=0)
    raw = 2.0 * lattice.num_edges * frac
    return TVBound(times, np.minimum(raw, 1.0), raw, frac, len(runs))


# --------------------------------------------------------------------------
# size scaling

FAMILIES = ("torus", "free", "wired")


def family_boundary(family: str, n: int) -> FKBoundary:
    """FK boundary condition on an ``n x n`` lattice of the named family."""
    if family == "torus":
        return FKBoundary.periodic_bc(build_lattice(n, n, Topology.TORUS))
    if family == "free":
        return FKBoundary.free(build_lattice(n, n))
    if family == "wired":
        return FKBoundary.wired(build_lattice(n, n))
    raise ValueError(f"unknown boundary family {family!r}; choose from {FAMILIES}")


def replica_seed(seed: int, n: int, r: int) -> int:
    """Stream seed for replica ``r`` at size ``n``. Independent of the family,
    so torus and free runs with equal keys are seed-paired."""
    return int(np.random.SeedSequence([int(seed), int(n), int(r)]).generate_state(1)[0])


@dataclass
class ScalingTable:
    rows: list = field(default_factory=list)   # (n, seed, coalesce_sweeps, censored)
    family: str = ""
    t_max: float = 0.0

    def times(self, n: int) -> np.ndarray:
        return np.array([r[2] for r in self.rows if r[0] == n])

    def censored(self, n: int) -> np.ndarray:
        return np.array([r[3] for r in self.rows if r[0] == n])

    def sizes(self) -> list[int]:
        return sorted({r[0] for r in self.rows})

    def aggregate(self) -> list[tuple]:
        """``(n, median, q25, q75, censored_count)``; censored runs count as ``t_max``."""
        out = []
        for n in self.sizes():
            t = self.times(n)
            q25, med, q75 = np.percentile(t, [25, 50, 75])
            out.append((n, float(med), float(q25), float(q75), int(self.censored(n).sum())))
        return out

    def medians(self) -> np.ndarray:
        return np.array([a[1] for a in self.aggregate()])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "seed", "coalesce_sweeps", "censored"])
        for n, s, t, c in self.rows:
            w.writerow([n, s, repr(float(t)), "true" if c else "false"])
        return buf.getvalue()

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "median", "q25", "q75", "censored"])
        for row in self.aggregate():
            w.writerow([row[0], *(repr(x) for x in row[1:4]), row[4]])
        return buf.getvalue()

    def monotone(self) -> bool:
        m = self.medians()
        return bool(np.all(np.diff(m) >= 0))


def coalescence_time(bc: FKBoundary, params: Params, seed: int, t_max: float):
    """``(sweeps, censored)`` for one replica; censored runs report ``t_max``."""
    stream = UpdateStream(seed, max(len(bc.dynamic_edge_list), 1))
    run = grand_coupling_run(bc, params, stream, t_max, trace_every=t_max)
    if run.coalesced:
        return run.coalescence, False
    return float(t_max), True


def coupling_time_scaling(sizes, family: str, params: Params, replicas: int, seed: int,
                          t_max: float, threads: int = 1) -> ScalingTable:
    """Coalescence sweeps of the extreme FK chains for each size and replica."""
    jobs = []
    for n in sizes:
        bc = family_boundary(family, n)
        for r in range(replicas):
            jobs.append((n, bc, replica_seed(seed, n, r)))

    def one(job):
        n, bc, s = job
        t, c = coalescence_time(bc, params, s, t_max)
        return (n, s, t, c)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, jobs))
    else:
        rows = [one(j) for j in jobs]
    return ScalingTable(rows, family, float(t_max))


def loglog_slope(sizes, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(sizes)``."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def sign_test_greater(a, b) -> tuple[int, int, float]:
    """One-sided paired sign test that ``a`` tends to exceed ``b``.

    Ties are dropped. Returns ``(wins, trials, p_value)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a - b
    wins = int(np.sum(d > 0))
    trials = int(np.sum(d != 0))
    p = sum(math.comb(trials, k) for k in range(wins, trials + 1)) / 2.0 ** trials if trials else 1.0
    return wins, trials, float(p)
