"""
Exact transition kernels and spectral quantities on tiny state spaces.

Kernels are single steps of the discrete-time chains: the heat-bath chains
pick a uniformly random dynamic site or edge, the cluster chains perform one
full sweep marginalised over their internal randomness. Continuous-time
gaps with rate-1 clocks per location are ``n_locations`` times the
discrete ones (see :func:`continuous_gap`).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .connectivity import bidirectional_connected, union_find_labels
from .dynamics import _boltzmann_table, block_conditional, block_sites
from .model import (FKBoundary, Params, PottsBoundary, WeightTable, enumerate_fk,
                    enumerate_potts)

DENSE_CAP = 4096
SPARSE_CAP = 2 ** 15
MIXING_CAP = 1024
ITERATIVE_ABOVE = 1024
CHEEGER_EXHAUSTIVE_CAP = 15   # 2^15 subsets
REVERSIBILITY_TOL = 1e-10

POTTS_GLAUBER = "potts-glauber"
FK_GLAUBER = "fk-glauber"
SW = "sw"            # Swendsen-Wang on spins
SW_BONDS = "sw-fk"   # the same chain observed on its bond configurations
CM = "cm"
BLOCK = "block"


@dataclass(frozen=True)
class StateSpace:
    table: WeightTable
    pi: np.ndarray

    @property
    def size(self) -> int:
        return len(self.pi)

    @property
    def kind(self) -> str:
        return self.table.kind

    def configs(self, idx=None):
        return self.table.configs(idx)


@dataclass(frozen=True)
class KernelMatrix:
    P: object            # dense ndarray or scipy CSR matrix
    tag: str
    n_locations: int = 1  # sites/edges/blocks refreshed at rate 1 in continuous time

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.P)

    @property
    def size(self) -> int:
        return self.P.shape[0]

    def dense(self) -> np.ndarray:
        return self.P.toarray() if self.is_sparse else np.asarray(self.P)


class StateSpaceTooLarge(ValueError):
    pass


def _state_space(table: WeightTable) -> StateSpace:
    return StateSpace(table, table.probabilities)


def _require(count, cap, what):
    if count > cap:
        raise StateSpaceTooLarge(f"{what}: {count} states exceed the cap of {cap}")


# --------------------------------------------------------------------------
# kernel builders (numba)

@nb.njit(cache=True)
def _potts_glauber_coo(configs, sites, ptr, nbr, table, q, powq):
    N = configs.shape[0]
    L = sites.shape[0]
    nnz = N * L * q
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    counts = np.zeros(q + 2, dtype=np.int64)
    w = np.empty(q + 1)
    t = 0
    for i in range(N):
        conf = configs[i]
        for j in range(L):
            s = sites[j]
            for k in range(q + 1):
                counts[k] = 0
            top = 0
            for m in range(ptr[s], ptr[s + 1]):
                c = conf[nbr[m]]
                counts[c] += 1
                if counts[c] > top:
                    top = counts[c]
            tot = 0.0
            for k in range(1, q + 1):
                w[k] = table[top - counts[k]]
                tot += w[k]
            cur = conf[s]
            for k in range(1, q + 1):
                rows[t] = i
                cols[t] = i + (k - cur) * powq[j]
                vals[t] = w[k] / tot / L
                t += 1
    return rows, cols, vals


@nb.njit(cache=True)
def _fk_glauber_coo(configs, codes, locs, edges, ptr, nbr, eid, cls, cptr, cmem, p_conn, p_iso):
    N = configs.shape[0]
    L = locs.shape[0]
    V = cls.shape[0]
    rows = np.empty(2 * N * L, dtype=np.int64)
    cols = np.empty(2 * N * L, dtype=np.int64)
    vals = np.empty(2 * N * L)
    mark = np.full(V, -1, dtype=np.int64)
    cmark = np.full(V, -1, dtype=np.int64)
    qa = np.empty(V, dtype=np.int64)
    qb = np.empty(V, dtype=np.int64)
    stamp = 0
    t = 0
    for i in range(N):
        omega = configs[i]
        c = codes[i]
        for j in range(L):
            e = locs[j]
            stamp += 1
            conn = bidirectional_connected(ptr, nbr, eid, omega, cls, cptr, cmem, e,
                                           edges[e, 0], edges[e, 1], mark, cmark, stamp, qa, qb)
            po = p_conn if conn else p_iso
            rows[t] = i
            cols[t] = c | (1 << j)
            vals[t] = po / L
            t += 1
            rows[t] = i
            cols[t] = c & ~(1 << j)
            vals[t] = (1.0 - po) / L
            t += 1
    return rows, cols, vals


@nb.njit(cache=True)
def _sw_spin_to_bond_coo(configs, edges, locs, p):
    """Rows: spin states; columns: bond codes over ``locs``; weight of
    percolating the agreeing edges."""
    N = configs.shape[0]
    L = locs.shape[0]
    agree = np.empty(L, dtype=np.int64)
    total = 0
    for i in range(N):
        m = 0
        for j in range(L):
            e = locs[j]
            if configs[i, edges[e, 0]] == configs[i, edges[e, 1]]:
                m += 1
        total += 1 << m
    rows = np.empty(total, dtype=np.int64)
    cols = np.empty(total, dtype=np.int64)
    vals = np.empty(total)
    t = 0
    for i in range(N):
        m = 0
        for j in range(L):
            e = locs[j]
            if configs[i, edges[e, 0]] == configs[i, edges[e, 1]]:
                agree[m] = j
                m += 1
        for sub in range(1 << m):
            code = 0
            o = 0
            for b in range(m):
                if (sub >> b) & 1:
                    code |= 1 << agree[b]
                    o += 1
            rows[t] = i
            cols[t] = code
            vals[t] = p ** o * (1.0 - p) ** (m - o)
            t += 1
    return rows, cols, vals


@nb.njit(cache=True)
def _sw_bond_to_spin_coo(codes, locs, template, edges, cls, fixed_colors, sites, q, powq):
    """Rows: bond codes; columns: spin codes over ``sites``; uniform colouring
    of the clusters that hold no boundary colour."""
    V = cls.shape[0]
    E = template.shape[0]
    L = locs.shape[0]
    S = sites.shape[0]
    parent = np.empty(V, dtype=np.int64)
    forced = np.zeros(V, dtype=np.int64)
    slot = np.full(V, -1, dtype=np.int64)
    omega = template.copy()
    # first pass: count
    total = 0
    kf = np.zeros(codes.shape[0], dtype=np.int64)
    ok = np.ones(codes.shape[0], dtype=np.bool_)
    for i in range(codes.shape[0]):
        c = codes[i]
        for j in range(L):
            omega[locs[j]] = (c >> j) & 1
        union_find_labels(V, edges, omega, cls, parent)
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
        if not ok[i]:
            continue
        k = 0
        for v in range(V):
            if parent[v] == v and forced[v] == 0:
                k += 1
        kf[i] = k
        total += q ** k
    rows = np.empty(total, dtype=np.int64)
    cols = np.empty(total, dtype=np.int64)
    vals = np.empty(total)
    t = 0
    for i in range(codes.shape[0]):
        if not ok[i]:
            continue
        c = codes[i]
        for j in range(L):
            omega[locs[j]] = (c >> j) & 1
        union_find_labels(V, edges, omega, cls, parent)
        for v in range(V):
            forced[v] = 0
            slot[v] = -1
        for v in range(V):
            col = fixed_colors[v]
            if col != 0:
                forced[parent[v]] = col
        k = 0
        for v in range(V):
            if parent[v] == v and forced[v] == 0:
                slot[v] = k
                k += 1
        w = 1.0 / q ** k
        for a in range(q ** k):
            code = 0
            for j in range(S):
                r = parent[sites[j]]
                if forced[r] != 0:
                    col = forced[r]
                else:
                    col = 1 + (a // q ** slot[r]) % q
                code += (col - 1) * powq[j]
            rows[t] = i
            cols[t] = code
            vals[t] = w
            t += 1
    return rows, cols, vals


@nb.njit(cache=True)
def _cm_dense(codes, index_of, locs, template, edges, cls, p, q, out):
    V = cls.shape[0]
    L = locs.shape[0]
    parent = np.empty(V, dtype=np.int64)
    roots = np.empty(V, dtype=np.int64)
    rslot = np.full(V, -1, dtype=np.int64)
    ea = np.empty(L, dtype=np.int64)
    eb = np.empty(L, dtype=np.int64)
    nmask = 1 << L
    mprob = np.zeros(nmask)
    touched = np.empty(nmask, dtype=np.int64)
    omega = template.copy()
    inv = 1.0 / q
    for i in range(codes.shape[0]):
        c = codes[i]
        for j in range(L):
            omega[locs[j]] = (c >> j) & 1
        union_find_labels(V, edges, omega, cls, parent)
        k = 0
        for v in range(V):
            if parent[v] == v:
                rslot[v] = k
                roots[k] = v
                k += 1
        for j in range(L):
            e = locs[j]
            ea[j] = rslot[parent[edges[e, 0]]]
            eb[j] = rslot[parent[edges[e, 1]]]
        nt = 0
        for S in range(1 << k):
            a = 0
            for b in range(k):
                a += (S >> b) & 1
            pr = inv ** a * (1.0 - inv) ** (k - a)
            if pr == 0.0:
                continue
            M = 0
            for j in range(L):
                if (S >> ea[j]) & 1 and (S >> eb[j]) & 1:
                    M |= 1 << j
            if mprob[M] == 0.0:
                touched[nt] = M
                nt += 1
            mprob[M] += pr
        for t in range(nt):
            M = touched[t]
            pm = mprob[M]
            mprob[M] = 0.0
            base = c & ~M
            # enumerate submasks of M
            sub = M
            while True:
                o = 0
                m = 0
                for j in range(L):
                    if (M >> j) & 1:
                        m += 1
                        if (sub >> j) & 1:
                            o += 1
                tgt = index_of[base | sub]
                out[i, tgt] += pm * p ** o * (1.0 - p) ** (m - o)
                if sub == 0:
                    break
                sub = (sub - 1) & M
        for v in range(V):
            rslot[v] = -1


@nb.njit(cache=True)
def _block_coo(configs, block_ptr, block_digits, block_sites_, touch_ptr, touch_a, touch_b,
               q, powq, beta, beta_inf):
    N = configs.shape[0]
    nb_ = block_ptr.shape[0] - 1
    total = 0
    for b in range(nb_):
        total += q ** (block_ptr[b + 1] - block_ptr[b])
    total *= N
    rows = np.empty(total, dtype=np.int64)
    cols = np.empty(total, dtype=np.int64)
    vals = np.empty(total)
    t = 0
    for i in range(N):
        for b in range(nb_):
            m = block_ptr[b + 1] - block_ptr[b]
            work = configs[i].copy()
            base = i
            for j in range(block_ptr[b], block_ptr[b + 1]):
                base -= (work[block_sites_[j]] - 1) * powq[block_digits[j]]
            K = q ** m
            en = np.empty(K)
            tg = np.empty(K, dtype=np.int64)
            for a in range(K):
                code = base
                x = a
                for j in range(block_ptr[b], block_ptr[b + 1]):
                    col = 1 + x % q
                    x //= q
                    work[block_sites_[j]] = col
                    code += (col - 1) * powq[block_digits[j]]
                s = 0
                for r in range(touch_ptr[b], touch_ptr[b + 1]):
                    if work[touch_a[r]] == work[touch_b[r]]:
                        s += 1
                en[a] = s
                tg[a] = code
            top = en.max()
            tot = 0.0
            for a in range(K):
                if beta_inf:
                    en[a] = 1.0 if en[a] == top else 0.0
                else:
                    en[a] = math.exp(beta * (en[a] - top))
                tot += en[a]
            for a in range(K):
                rows[t] = i
                cols[t] = tg[a]
                vals[t] = en[a] / tot / nb_
                t += 1
    return rows, cols, vals


# --------------------------------------------------------------------------
# kernel enumeration

def _coo(rows, cols, vals, n_rows, n_cols):
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))


def _renormalize_rows(M):
    """Divide out the rounding left in the row sums of a kernel product."""
    d = np.asarray(M.sum(axis=1)).ravel()
    return sp.diags(1.0 / d) @ M


def _finish(M, size, tag, n_loc, force_sparse=False):
    if size <= DENSE_CAP and not force_sparse:
        M = M.toarray() if sp.issparse(M) else M
    return KernelMatrix(M, tag, n_loc)


def sw_factors(bc: PottsBoundary, params: Params, bond_table: WeightTable | None = None):
    """The two halves of a Swendsen-Wang step as sparse matrices.

    ``A[s, w]`` is the probability that percolating the agreeing edges of
    spin state ``s`` gives bond code ``w``; ``B[w, s']`` the probability that
    colouring the clusters of ``w`` gives ``s'``. Rows of ``B`` are indexed by
    ``bond_table`` (all bond codes when omitted).
    """
    q = params.q_int
    fk = bc.to_fk()
    lat = bc.lattice
    ptab = enumerate_potts(bc, params)
    locs = fk.dynamic_edge_list
    nb_codes = 2 ** len(locs)
    configs = ptab.configs()
    r, c, v = _sw_spin_to_bond_coo(configs, lat.edges, locs, params.p)
    A = _coo(r, c, v, len(ptab), nb_codes)
    codes = np.arange(nb_codes, dtype=np.int64) if bond_table is None else bond_table.codes
    sites = ptab.locations
    powq = q ** np.arange(len(sites), dtype=np.int64)
    r, c, v = _sw_bond_to_spin_coo(codes, locs, fk.extreme_config(0), lat.edges, fk.cls,
                                   bc.colors, sites, q, powq)
    B = _coo(r, c, v, len(codes), len(ptab))
    if bond_table is not None:
        A = A[:, bond_table.codes]
    return ptab, A.tocsr(), B.tocsr()


def enumerate_kernel(tag: str, bc, params: Params, blocks=None):
    """Exact single-step kernel of a chain and its state space.

    ``bc`` is a :class:`PottsBoundary` for spin chains (``potts-glauber``,
    ``sw``, ``block``) and for ``sw-fk``; an :class:`FKBoundary` for
    ``fk-glauber`` and ``cm``. ``blocks`` lists the regions of the block chain.
    """
    lat = bc.lattice
    if tag == POTTS_GLAUBER:
        q = params.q_int
        _require(q ** len(bc.dynamic_site_list), SPARSE_CAP, tag)
        tab = enumerate_potts(bc, params)
        ptr, nbr, _ = lat.adjacency
        table = _boltzmann_table(params.beta, int(np.diff(ptr).max(initial=0)))
        powq = q ** np.arange(len(tab.locations), dtype=np.int64)
        r, c, v = _potts_glauber_coo(tab.configs(), tab.locations, ptr, nbr, table, q, powq)
        M = _coo(r, c, v, len(tab), len(tab))
        return _state_space(tab), _finish(M, len(tab), tag, len(tab.locations), force_sparse=True)
    if tag == FK_GLAUBER:
        _require(2 ** len(bc.dynamic_edge_list), SPARSE_CAP, tag)
        tab = enumerate_fk(bc, params)
        ptr, nbr, eid = lat.adjacency
        r, c, v = _fk_glauber_coo(tab.configs(), tab.codes, tab.locations, lat.edges, ptr, nbr,
                                  eid, bc.cls, bc.class_ptr, bc.class_members, params.p,
                                  params.p_isolated)
        M = _coo(r, c, v, len(tab), len(tab))
        return _state_space(tab), _finish(M, len(tab), tag, len(tab.locations), force_sparse=True)
    if tag == SW:
        q = params.q_int
        _require(q ** len(bc.dynamic_site_list), DENSE_CAP, tag)
        ptab, A, B = sw_factors(bc, params)
        return _state_space(ptab), _finish(_renormalize_rows(A @ B), len(ptab), tag, 1)
    if tag == SW_BONDS:
        fk = bc.to_fk()
        _require(2 ** len(fk.dynamic_edge_list), DENSE_CAP, tag)
        ftab = enumerate_fk(fk, params, bc if bc.colors.any() else None)
        _, A, B = sw_factors(bc, params, ftab)
        return _state_space(ftab), _finish(_renormalize_rows(B @ A), len(ftab), tag, 1)
    if tag == CM:
        _require(2 ** len(bc.dynamic_edge_list), DENSE_CAP, tag)
        tab = enumerate_fk(bc, params)
        index_of = np.full(2 ** len(tab.locations), -1, dtype=np.int64)
        index_of[tab.codes] = np.arange(len(tab))
        out = np.zeros((len(tab), len(tab)))
        _cm_dense(tab.codes, index_of, tab.locations, bc.extreme_config(0), lat.edges, bc.cls,
                  params.p, params.q, out)
        return _state_space(tab), KernelMatrix(out, tag, 1)
    if tag == BLOCK:
        q = params.q_int
        if not blocks:
            raise ValueError("block kernel needs a list of block regions")
        _require(q ** len(bc.dynamic_site_list), DENSE_CAP, tag)
        tab = enumerate_potts(bc, params)
        digit_of = {int(s): j for j, s in enumerate(tab.locations)}
        a, b = lat.edges[:, 0], lat.edges[:, 1]
        bptr, bdig, bsite, tptr, ta, tb = [0], [], [], [0], [], []
        for region in blocks:
            sites = block_sites(region, bc)
            inb = np.zeros(lat.num_vertices, dtype=bool)
            inb[sites] = True
            touch = (inb[a] | inb[b]) & bc.weighted_edges
            bsite.extend(sites.tolist())
            bdig.extend(digit_of[int(s)] for s in sites)
            bptr.append(len(bsite))
            ta.extend(a[touch].tolist())
            tb.extend(b[touch].tolist())
            tptr.append(len(ta))
        arr = lambda x: np.asarray(x, dtype=np.int64)
        powq = q ** np.arange(len(tab.locations), dtype=np.int64)
        r, c, v = _block_coo(tab.configs(), arr(bptr), arr(bdig), arr(bsite), arr(tptr), arr(ta),
                             arr(tb), q, powq, params.beta if math.isfinite(params.beta) else 0.0,
                             math.isinf(params.beta))
        M = _coo(r, c, v, len(tab), len(tab))
        return _state_space(tab), _finish(M, len(tab), tag, len(blocks))
    raise ValueError(f"unknown chain tag {tag!r}")


# --------------------------------------------------------------------------
# diagnostics

@dataclass(frozen=True)
class KernelChecks:
    row_sum_error: float
    reversibility_residual: float
    stationarity_residual: float


def kernel_checks(P: KernelMatrix, pi: np.ndarray) -> KernelChecks:
    M = P.P
    if P.is_sparse:
        rows = np.abs(np.asarray(M.sum(axis=1)).ravel() - 1).max()
        F = sp.diags(pi) @ M
        rev = abs(F - F.T).max()
        stat = np.abs(M.T @ pi - pi).max()
    else:
        rows = np.abs(M.sum(axis=1) - 1).max()
        F = pi[:, None] * M
        rev = np.abs(F - F.T).max()
        stat = np.abs(pi @ M - pi).max()
    return KernelChecks(float(rows), float(rev), float(stat))


class NonReversibleKernel(ValueError):
    pass


def _check_reversible(P: KernelMatrix, pi):
    chk = kernel_checks(P, pi)
    if chk.reversibility_residual > REVERSIBILITY_TOL:
        raise NonReversibleKernel(
            f"kernel {P.tag} is not reversible: residual {chk.reversibility_residual:.3e}")
    return chk


def _symmetrized(P: KernelMatrix, pi):
    s = np.sqrt(pi)
    if P.is_sparse:
        D, Di = sp.diags(s), sp.diags(1.0 / s)
        S = D @ P.P @ Di
        return ((S + S.T) * 0.5).tocsr()
    S = s[:, None] * P.P / s[None, :]
    return 0.5 * (S + S.T)


def spectral_gap(P: KernelMatrix, pi: np.ndarray) -> tuple[float, float]:
    """``(gap, gap_star)`` with ``gap = 1 - lambda_2`` and ``gap_star = 1 -
    max |lambda|`` over the nontrivial spectrum.

    Spaces above ``ITERATIVE_ABOVE`` states use Lanczos on the symmetrised
    kernel instead of a full dense eigendecomposition.
    """
    _check_reversible(P, pi)
    S = _symmetrized(P, pi)
    n = P.size
    if n == 1:
        return 1.0, 1.0
    if n <= ITERATIVE_ABOVE:
        S = S.toarray() if sp.issparse(S) else S
        lam = np.sort(sla.eigvalsh(S))[::-1]
        l2, lmin = lam[1], lam[-1]
    else:
        top = spla.eigsh(S, k=2, which="LA", tol=0, return_eigenvectors=False)
        l2 = float(np.sort(top)[0])
        if P.tag in (SW, SW_BONDS):
            # K K^* factorisation through the joint measure: spectrum is in [0, 1]
            lmin = 0.0
        else:
            lmin = float(spla.eigsh(S, k=1, which="SA", tol=0,
                                    return_eigenvectors=False)[0])
    gap = 1.0 - l2
    gap_star = 1.0 - max(abs(l2), abs(lmin))
    return float(gap), float(gap_star)


def dirichlet_matrices(P: KernelMatrix, pi: np.ndarray):
    """``(L, D)`` with ``E(f, f) = f^T L f`` and ``D = diag(pi)``."""
    if P.is_sparse:
        F = sp.diags(pi) @ P.P
        F = (F + F.T) * 0.5
        L = sp.diags(np.asarray(F.sum(axis=1)).ravel()) - F
        return L.tocsr(), sp.diags(pi)
    F = pi[:, None] * P.P
    F = 0.5 * (F + F.T)
    return np.diag(F.sum(axis=1)) - F, np.diag(pi)


def dirichlet_gap(P: KernelMatrix, pi: np.ndarray) -> float:
    """Smallest nonzero value of ``E(f, f) / Var(f)`` over the state space,
    solved as the generalised eigenproblem ``L f = lambda diag(pi) f``
    (shift-invert Lanczos on large spaces)."""
    _check_reversible(P, pi)
    if P.size == 1:
        return 1.0
    L, D = dirichlet_matrices(P, pi)
    if P.size <= ITERATIVE_ABOVE:
        L = L.toarray() if sp.issparse(L) else L
        D = D.toarray() if sp.issparse(D) else D
        lam = sla.eigh(L, D, eigvals_only=True)
        return float(np.sort(lam)[1])
    # normalised Laplacian D^{-1/2} L D^{-1/2}, smallest two eigenvalues
    r = 1.0 / np.sqrt(pi)
    if sp.issparse(L):
        N = (sp.diags(r) @ L @ sp.diags(r)).tocsr()
    else:
        N = r[:, None] * L * r[None, :]
    lam = spla.eigsh(N, k=2, which="SA", tol=0, return_eigenvectors=False)
    return float(np.sort(lam)[1])


def dirichlet_quotient(P: KernelMatrix, pi: np.ndarray, f: np.ndarray) -> float:
    """``E(f, f) / Var_pi(f)`` for a test function ``f`` (an upper bound on the gap)."""
    L, _ = dirichlet_matrices(P, pi)
    f = np.asarray(f, dtype=float)
    energy = float(f @ (L @ f))
    var = float(pi @ f ** 2 - (pi @ f) ** 2)
    if var <= 0:
        raise ValueError("test function is constant under pi")
    return energy / var


def continuous_gap(gap_discrete: float, P: KernelMatrix) -> float:
    """Gap of the continuous-time chain with rate-1 clocks on each location."""
    return gap_discrete * P.n_locations


# --------------------------------------------------------------------------
# conductance

@dataclass(frozen=True)
class CheegerResult:
    phi_S: float
    Phi: float | None
    minimiser: np.ndarray | None = None
    reducible: bool = False


@nb.njit(cache=True)
def _gray_min_phi(F, pi):
    """Minimum of ``Q(S, S^c) / (pi(S) pi(S^c))`` over nonempty proper subsets
    by Gray-code enumeration with incremental flow updates."""
    n = pi.shape[0]
    inS = np.zeros(n, dtype=np.bool_)
    # cross[x] = sum over y in S of F[x, y] (flow between x and S)
    cross = np.zeros(n)
    Q = 0.0
    mass = 0.0
    best = np.inf
    best_code = 0
    code = 0
    for i in range(1, 1 << n):
        # bit flipped between Gray codes i-1 and i
        b = 0
        x = i
        while (x & 1) == 0:
            x >>= 1
            b += 1
        if inS[b]:
            inS[b] = False
            mass -= pi[b]
            # cross[b] still counts the diagonal term F[b, b]
            Q += 2.0 * cross[b] - F[b].sum() - F[b, b]
            for y in range(n):
                cross[y] -= F[y, b]
        else:
            inS[b] = True
            mass += pi[b]
            Q += (F[b].sum() - F[b, b]) - cross[b] - cross[b]
            for y in range(n):
                cross[y] += F[y, b]
        code ^= 1 << b
        if 0.0 < mass < 1.0 and code != (1 << n) - 1:
            denom = mass * (1.0 - mass)
            if denom > 0:
                phi = Q / denom
                if phi < best:
                    best = phi
                    best_code = code
    return best, best_code


def cheeger(P: KernelMatrix, pi: np.ndarray, S=None, exhaustive: bool | None = None) -> CheegerResult:
    """``phi_S = Q(S, S^c) / (pi(S) pi(S^c))`` and, on spaces of at most 15
    states, the global minimum ``Phi`` over all nonempty proper subsets."""
    n = P.size
    M = P.dense() if n <= DENSE_CAP else None
    phi_S = None
    if S is not None:
        S = np.asarray(S)
        if S.size == 0:
            raise ValueError("S must be a nonempty proper subset")
        mask = np.zeros(n, dtype=bool)
        if S.dtype == bool:
            mask[:] = S
        else:
            mask[S] = True
        if not mask.any() or mask.all():
            raise ValueError("S must be a nonempty proper subset")
        if M is not None:
            Q = float((pi[mask][:, None] * M[np.ix_(mask, ~mask)]).sum())
        else:
            sub = P.P[mask][:, ~mask]
            Q = float(pi[mask] @ np.asarray(sub.sum(axis=1)).ravel())
        pS = float(pi[mask].sum())
        phi_S = Q / (pS * (1 - pS))
    if exhaustive is None:
        exhaustive = n <= CHEEGER_EXHAUSTIVE_CAP
    Phi = minimiser = None
    if exhaustive:
        if n > CHEEGER_EXHAUSTIVE_CAP:
            raise StateSpaceTooLarge(f"exhaustive conductance needs <= {CHEEGER_EXHAUSTIVE_CAP} states")
        F = pi[:, None] * M
        F = 0.5 * (F + F.T)
        Phi, code = _gray_min_phi(F, pi)
        minimiser = np.array([(code >> i) & 1 for i in range(n)], dtype=bool)
    reducible = phi_S == 0.0 if phi_S is not None else False
    return CheegerResult(phi_S, Phi, minimiser, reducible)


def random_subsets(n: int, count: int, rng: np.random.Generator):
    """Nonempty proper random subsets (as masks) for conductance checks."""
    out = []
    while len(out) < count:
        m = rng.random(n) < rng.uniform(0.05, 0.95)
        if m.any() and not m.all():
            out.append(m)
    return out


# --------------------------------------------------------------------------
# mixing time

class NotMixing(RuntimeError):
    pass


def _worst_tv(Pt, pi):
    return 0.5 * np.abs(Pt - pi[None, :]).sum(axis=1).max()


def mixing_time_exact(P: KernelMatrix, pi: np.ndarray, delta: float = 1 / (2 * math.e),
                      max_steps: int = 1 << 20) -> int:
    """Smallest ``t`` with ``max_x || P^t(x, .) - pi ||_TV < delta``.

    Squares the kernel to bracket ``t`` and then bisects using products of
    the stored powers (the worst-case distance is nonincreasing in ``t``).
    """
    _require(P.size, MIXING_CAP, "mixing time")
    M = P.dense()
    if _worst_tv(M, pi) < delta:
        return 1
    powers = [M]  # powers[k] = P^(2^k)
    while _worst_tv(powers[-1], pi) >= delta:
        if 2 ** len(powers) > max_steps:
            raise NotMixing(f"distance still {_worst_tv(powers[-1], pi):.3g} after "
                            f"{2 ** (len(powers) - 1)} steps (periodic or reducible chain?)")
        powers.append(powers[-1] @ powers[-1])
    # t in (2^(K-1), 2^K]; binary search over bits below the top one
    K = len(powers) - 1
    lo_t, lo_mat = 2 ** (K - 1), powers[K - 1]
    for k in range(K - 2, -1, -1):
        cand = lo_mat @ powers[k]
        if _worst_tv(cand, pi) >= delta:
            lo_t, lo_mat = lo_t + 2 ** k, cand
    return lo_t + 1


@dataclass(frozen=True)
class MixingBracket:
    t_mix: int
    lower: float
    upper: float

    @property
    def holds(self) -> bool:
        return self.lower <= self.t_mix <= self.upper


def mixing_bracket(P: KernelMatrix, pi: np.ndarray) -> MixingBracket:
    """``t_mix`` at ``delta = 1/(2e)`` with the relaxation-time bounds
    ``1/gap - 1 <= t_mix <= log(2e / pi_min) / gap_star``."""
    gap, gap_star = spectral_gap(P, pi)
    t = mixing_time_exact(P, pi)
    upper = math.log(2 * math.e / pi.min()) / gap_star if gap_star > 0 else math.inf
    return MixingBracket(t, 1.0 / gap - 1.0, upper)


# --------------------------------------------------------------------------
# comparison inequalities

@dataclass
class ComparisonReport:
    """Gaps of the four chains (discrete time) and the comparison margins.

    Each entry of ``checks`` is ``(lhs, rhs, holds)`` for ``lhs <= rhs``.
    Bounds involving ``log|E|`` are skipped on graphs with a single edge.
    """

    gap_potts: float
    gap_rc: float
    gap_sw: float
    gap_cm: float
    n_edges: int
    max_degree: int
    checks: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return all(ok for _, _, ok in self.checks.values())

    def lines(self) -> list[str]:
        out = [f"gap_potts={self.gap_potts:.6g} gap_rc={self.gap_rc:.6g} "
               f"gap_sw={self.gap_sw:.6g} gap_cm={self.gap_cm:.6g} |E|={self.n_edges} "
               f"max_degree={self.max_degree}"]
        for name, (lhs, rhs, ok) in self.checks.items():
            out.append(f"{name}: {lhs:.6g} <= {rhs:.6g} margin={rhs - lhs:.3g} "
                       f"{'ok' if ok else 'FAIL'}")
        return out


def _gap_only(tag, bc, params):
    space, P = enumerate_kernel(tag, bc, params)
    return spectral_gap(P, space.pi)[0]


def check_ullrich(bc: PottsBoundary, params: Params) -> ComparisonReport:
    """Compare Potts Glauber, FK Glauber, Swendsen-Wang and Chayes-Machta gaps.

    Only the free or periodic condition is admissible. The Chayes-Machta
    comparison is an order-of-magnitude statement; its lower bound is checked
    with the Swendsen-Wang constant divided by ``q`` (tight on a single edge)
    and its upper bound with the Swendsen-Wang constant.
    """
    if bc.colors.any():
        raise ValueError("comparison inequalities are checked without boundary colours only")
    q = params.q_int
    lat = bc.lattice
    fk = bc.to_fk()
    gP = _gap_only(POTTS_GLAUBER, bc, params)
    gRC = _gap_only(FK_GLAUBER, fk, params)
    swtag = SW if q ** len(bc.dynamic_site_list) <= DENSE_CAP else SW_BONDS
    gSW = _gap_only(swtag, bc, params)
    gCM = _gap_only(CM, fk, params)
    E = int(fk.dynamic_edges.sum())
    Delta = int(np.diff(lat.adjacency[0]).max())
    p, beta = params.p, params.beta
    rep = ComparisonReport(gP, gRC, gSW, gCM, E, Delta)
    tol = 1e-12
    c1 = 2 * q ** 2 * (q * math.exp(2 * beta)) ** (4 * Delta)
    rep.checks["potts<=sw"] = (gP, c1 * gSW, gP <= c1 * gSW + tol)
    lo = 1 - p + p / q
    rep.checks["rc<=sw"] = (lo * gRC, gSW, lo * gRC <= gSW + tol)
    # the real-q comparison has no explicit constant; a Chayes-Machta step
    # resamples one of q colour classes, so the Swendsen-Wang constant is divided by q
    rep.checks["rc<=cm"] = (lo * gRC / q, gCM, lo * gRC / q <= gCM + tol)
    if E >= 2:
        hi = 8 * E * math.log(E)
        rep.checks["sw<=rc"] = (gSW, hi * gRC, gSW <= hi * gRC + tol)
        rep.checks["cm<=rc"] = (gCM, hi * gRC, gCM <= hi * gRC + tol)
    return rep


# --------------------------------------------------------------------------
# block dynamics comparison

@dataclass(frozen=True)
class BlockComparison:
    """Continuous-time gaps for ``gap >= gap_block * inf_i gap_i / chi``."""

    gap_glauber: float
    gap_block: float
    inf_block_gap: float
    chi: int

    @property
    def bound(self) -> float:
        return self.gap_block * self.inf_block_gap / self.chi

    @property
    def holds(self) -> bool:
        return self.gap_glauber >= self.bound - 1e-12


def _restricted_glauber_gap(prob: np.ndarray, m: int, q: int) -> float:
    """Discrete heat-bath gap on ``m`` sites from the conditional law ``prob``
    over base-``q`` codes."""
    N = len(prob)
    P = np.zeros((N, N))
    codes = np.arange(N)
    for j in range(m):
        digit = (codes // q ** j) % q
        base = codes - digit * q ** j
        for c in range(N):
            nbrs = base[c] + q ** j * np.arange(q)
            w = prob[nbrs]
            P[c, nbrs] += w / (w.sum() * m)
    return spectral_gap(KernelMatrix(P, POTTS_GLAUBER, m), prob)[0]


def block_comparison(bc: PottsBoundary, params: Params, blocks) -> BlockComparison:
    """Exact terms of the block-dynamics comparison on a tiny instance.

    ``gap_i`` is the heat-bath gap inside block ``i`` minimised over every
    configuration outside it; ``chi`` is the largest number of blocks sharing
    a site. All gaps use rate-1 clocks per site (per block for the block
    chain).
    """
    q = params.q_int
    space, PG = enumerate_kernel(POTTS_GLAUBER, bc, params)
    gG = continuous_gap(spectral_gap(PG, space.pi)[0], PG)
    _, PB = enumerate_kernel(BLOCK, bc, params, blocks=blocks)
    gB = continuous_gap(spectral_gap(PB, space.pi)[0], PB)
    configs = space.configs()
    count = np.zeros(bc.lattice.num_vertices, dtype=np.int64)
    inf_gap = math.inf
    for region in blocks:
        sites = block_sites(region, bc)
        count[sites] += 1
        if len(sites) == 0:
            continue
        outside = np.setdiff1d(bc.dynamic_site_list, sites)
        seen = set()
        for sigma in configs:
            key = sigma[outside].tobytes()
            if key in seen:
                continue
            seen.add(key)
            prob, _ = block_conditional(sigma, sites, bc, params)
            inf_gap = min(inf_gap, len(sites) * _restricted_glauber_gap(prob, len(sites), q))
    return BlockComparison(gG, gB, inf_gap, int(count.max()))
