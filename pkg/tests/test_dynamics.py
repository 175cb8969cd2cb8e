import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from critpotts import spectral
from critpotts.dynamics import (FK_GLAUBER, POTTS_GLAUBER, CensorInterval, CensorSchedule,
                                ChainState, ScanMode, UpdateStream, apply_fk_glauber,
                                block_dynamics_step, chayes_machta_step, east_west_blocks,
                                fk_glauber_step, potts_glauber_step, run, run_cluster,
                                stream_for, swendsen_wang_step)
from critpotts.lattice import EdgeSet, Rect, build_lattice
from critpotts.model import FKBoundary, Params, PottsBoundary, enumerate_fk, enumerate_potts


# -- update stream ------------------------------------------------------------

def test_stream_deterministic():
    a, b = UpdateStream(7, 10), UpdateStream(7, 10)
    for x, y in zip(a.next(100_000), b.next(100_000)):
        assert np.array_equal(x, y)


def test_stream_slicing_invariant():
    a, b = UpdateStream(3, 5), UpdateStream(3, 5)
    whole = a.next(70_000)
    parts = [b.next(k) for k in (1, 999, 65_000, 4_000)]
    for i in range(3):
        assert np.array_equal(whole[i], np.concatenate([p[i] for p in parts]))


def test_discrete_timestamps():
    s = UpdateStream(1, 4)
    _, _, T = s.next(12)
    assert np.allclose(T, np.arange(12) / 4)


def test_continuous_rate():
    s = UpdateStream(1, 50, ScanMode.CONTINUOUS)
    _, _, T = s.take(200.0)
    # rate 50 per unit time
    assert abs(len(T) / 200.0 - 50) < 1.0
    assert np.all(np.diff(T) > 0)


def test_scan_modes_share_jump_chain():
    a = UpdateStream(11, 9, ScanMode.DISCRETE).next(1000)
    b = UpdateStream(11, 9, ScanMode.CONTINUOUS).next(1000)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_seek():
    a = UpdateStream(5, 3)
    a.next(70_001)
    b = UpdateStream(5, 3)
    b.seek(70_001)
    assert np.array_equal(a.next(10)[0], b.next(10)[0])


# -- heat-bath steps ----------------------------------------------------------

def test_isolated_site_uniform():
    lat = build_lattice(0, 0)
    bc = PottsBoundary.free(lat)
    params = Params.critical(3)
    for u, c in ((0.0, 1), (0.33, 1), (0.34, 2), (0.66, 2), (0.67, 3), (0.999, 3)):
        st_ = ChainState(np.array([2]))
        assert potts_glauber_step(st_, 0, u, bc, params).config[0] == c


def test_four_agreeing_neighbours():
    lat = build_lattice(2, 2)
    bc = PottsBoundary.free(lat)
    params = Params.critical(2)
    want = math.exp(4 * params.beta) / (math.exp(4 * params.beta) + 1)
    assert want == pytest.approx(0.971405, abs=1e-6)
    centre = lat.vertex(1, 1)
    for u, c in ((want - 1e-9, 1), (want + 1e-9, 2)):
        st_ = ChainState(np.ones(lat.num_vertices, dtype=np.int64))
        assert potts_glauber_step(st_, centre, u, bc, params).config[centre] == c


def test_boundary_site_rejected():
    lat = build_lattice(2, 2)
    bc = PottsBoundary.monochromatic(lat, 1)
    with pytest.raises(ValueError):
        potts_glauber_step(ChainState(bc.constant_config(1)), 0, 0.5, bc, Params.critical(2))


def test_fk_q1_ignores_connectivity():
    lat = build_lattice(2, 2)
    bc = FKBoundary.free(lat)
    params = Params(1.0, 0.5)
    e = lat.horizontal_edge(0, 1)
    for base in (bc.extreme_config(0), bc.extreme_config(1)):
        for u, want in ((0.49, 1), (0.51, 0)):
            st_ = ChainState(base.copy())
            assert fk_glauber_step(st_, e, u, bc, params).config[e] == want


def test_fk_isolated_threshold():
    lat = build_lattice(2, 2)
    bc = FKBoundary.free(lat)
    params = Params(2.0, 0.5)
    e = lat.horizontal_edge(0, 1)
    for u, want in ((1 / 3 - 1e-9, 1), (1 / 3 + 1e-9, 0)):
        st_ = ChainState(bc.extreme_config(0))
        assert fk_glauber_step(st_, e, u, bc, params).config[e] == want
    # connected endpoints use p = 1/2
    st_ = ChainState(bc.extreme_config(1))
    assert fk_glauber_step(st_, e, 0.45, bc, params).config[e] == 1


def test_single_edge_stationary():
    lat = build_lattice(1, 0)
    bc = FKBoundary.free(lat)
    params = Params(2.0, 0.5)
    for start in (0, 1):
        st_ = ChainState(bc.extreme_config(start))
        s = UpdateStream(start + 10, 1)
        opens = 0
        for _ in range(50):
            J, U, _ = s.next(2000)
            # one edge: heat bath ignores the current state
            opens += int((U <= 1 / 3).sum())
            apply_fk_glauber(st_.config, J, U, bc, params)
        assert abs(opens / 100_000 - 1 / 3) < 0.01


@pytest.mark.parametrize("kind", [POTTS_GLAUBER, FK_GLAUBER])
def test_empirical_kernel_row(kind, rng):
    lat = build_lattice(1, 1)
    params = Params.critical(3)
    pb = PottsBoundary.free(lat)
    bc = pb if kind == POTTS_GLAUBER else pb.to_fk()
    space, K = spectral.enumerate_kernel(kind, bc, params)
    M = K.dense()
    i = int(np.argmax(space.pi))
    start = space.configs(i)[0]
    n = 100_000
    s = stream_for(kind, bc, 99)
    J, U, _ = s.next(n)
    counts = np.zeros(space.size)
    for j, u in zip(J[:n], U[:n]):
        st_ = ChainState(start.copy())
        loc = int((bc.dynamic_site_list if kind == POTTS_GLAUBER else bc.dynamic_edge_list)[j])
        (potts_glauber_step if kind == POTTS_GLAUBER else fk_glauber_step)(st_, loc, u, bc, params)
        counts[space.table.index(space.table.encode(st_.config))[0]] += 1
    assert 0.5 * np.abs(counts / n - M[i]).sum() < 0.01


# -- cluster chains -----------------------------------------------------------

def test_sw_zero_temperature_monochromatic(rng):
    lat = build_lattice(3, 3)
    bc = PottsBoundary.free(lat)
    sigma = np.full(lat.num_vertices, 2)
    for _ in range(20):
        swendsen_wang_step(sigma, bc, Params(3, 1.0), rng)
        assert len(set(sigma.tolist())) == 1


def test_sw_k2_transition(rng):
    lat = build_lattice(1, 0)
    bc = PottsBoundary.free(lat)
    params = Params.from_beta(2, math.log(2))
    space, K = spectral.enumerate_kernel(spectral.SW, bc, params)
    i = int(space.table.index(space.table.encode(np.array([1, 1])))[0])
    assert K.dense()[i, i] == pytest.approx(3 / 8, abs=1e-14)
    hits = 0
    for _ in range(40_000):
        s = np.array([1, 1])
        swendsen_wang_step(s, bc, params, rng)
        hits += s.tolist() == [1, 1]
    assert abs(hits / 40_000 - 3 / 8) < 0.01


def test_sw_kernel_reversible_2x2():
    lat = build_lattice(2, 2)
    space, K = spectral.enumerate_kernel(spectral.SW, PottsBoundary.free(lat), Params.critical(2))
    ch = spectral.kernel_checks(K, space.pi)
    assert ch.row_sum_error < 1e-12 and ch.reversibility_residual < 1e-12


def test_sw_boundary_clusters_keep_colour(rng):
    lat = build_lattice(3, 3)
    bc = PottsBoundary.monochromatic(lat, 2)
    sigma = bc.constant_config(2)
    for _ in range(10):
        swendsen_wang_step(sigma, bc, Params.critical(3), rng)
        assert np.all(sigma[lat.boundary_mask] == 2)


def test_sw_composition_matches_direct():
    """Spin-side kernel equals the sum over intermediate bonds, entry by entry."""
    lat = build_lattice(1, 1)
    bc = PottsBoundary.free(lat)
    params = Params.critical(2)
    space, K = spectral.enumerate_kernel(spectral.SW, bc, params)
    M = K.dense()
    edges = [tuple(map(int, e)) for e in lat.edges]
    configs = space.configs()
    p, q = params.p, 2
    for i, s in enumerate(configs):
        row = np.zeros(len(configs))
        for code in range(2 ** len(edges)):
            w = [(code >> j) & 1 for j in range(len(edges))]
            pr = 1.0
            for (a, b), o in zip(edges, w):
                agree = s[a] == s[b]
                pr *= (p if o else 1 - p) if agree else (0.0 if o else 1.0)
            if pr == 0:
                continue
            lab = oracles.components(lat.num_vertices, edges, w)
            k = len(set(lab))
            for j, t in enumerate(configs):
                if all(t[u] == t[lab[u]] for u in range(len(t))):
                    row[j] += pr * q ** -k
        assert np.allclose(row, M[i], atol=1e-14)


def test_cm_q1_is_fresh_percolation(rng):
    lat = build_lattice(2, 1)
    bc = FKBoundary.free(lat)
    params = Params(1.0, 0.3)
    out = []
    omega = bc.extreme_config(1)
    for _ in range(40_000):
        chayes_machta_step(omega, bc, params, rng)
        out.append(omega.copy())
    out = np.array(out)
    assert np.all(np.abs(out.mean(axis=0) - 0.3) < 0.01)
    lag = np.mean([np.corrcoef(out[:-1, e], out[1:, e])[0, 1] for e in range(lat.num_edges)])
    assert abs(lag) < 0.02


def test_cm_single_edge_activation(rng):
    lat = build_lattice(1, 0)
    bc = FKBoundary.free(lat)
    params = Params(2.0, 1.0)   # any resampled edge opens
    hits = 0
    for _ in range(40_000):
        omega = bc.extreme_config(0)
        chayes_machta_step(omega, bc, params, rng)
        hits += int(omega[0])
    assert abs(hits / 40_000 - 0.25) < 0.01


def test_cm_single_edge_stationary():
    lat = build_lattice(1, 0)
    space, K = spectral.enumerate_kernel(spectral.CM, FKBoundary.free(lat), Params(2.0, 0.5))
    pi = space.pi
    closed = int(space.table.index(space.table.encode(np.array([0])))[0])
    assert pi[closed] == pytest.approx(2 / 3, abs=1e-14)
    assert np.abs(pi @ K.dense() - pi).max() < 1e-12


# -- block dynamics -----------------------------------------------------------

def test_whole_lattice_block_is_exact(rng):
    lat = build_lattice(1, 1)
    bc = PottsBoundary.free(lat)
    params = Params.critical(3)
    tab = enumerate_potts(bc, params)
    rows = []
    for _ in range(60_000):
        st_ = ChainState(np.ones(lat.num_vertices, dtype=np.int64))
        block_dynamics_step(st_, [lat.full_rect()], 0, bc, params, rng)
        rows.append(st_.config)
    want = {tuple(int(x) for x in c): p for c, p in zip(tab.configs(), tab.probabilities)}
    assert oracles.tv(oracles.empirical(rows), want) < 0.03


def test_two_block_chain_reversible():
    lat = build_lattice(2, 2)
    bc = PottsBoundary.free(lat)
    space, K = spectral.enumerate_kernel(spectral.BLOCK, bc, Params.critical(2),
                                         blocks=east_west_blocks(lat))
    ch = spectral.kernel_checks(K, space.pi)
    assert ch.row_sum_error < 1e-12 and ch.reversibility_residual < 1e-12
    assert ch.stationarity_residual < 1e-12


def test_block_gap_bound():
    lat = build_lattice(2, 2)
    r = spectral.block_comparison(PottsBoundary.free(lat), Params.critical(2),
                                  east_west_blocks(lat))
    assert r.chi == 2
    assert r.holds, (r.gap_glauber, r.bound)


def test_block_fallback(rng):
    lat = build_lattice(3, 3)
    bc = PottsBoundary.free(lat)
    st_ = ChainState(np.ones(lat.num_vertices, dtype=np.int64))
    with pytest.raises(ValueError):
        block_dynamics_step(st_, [lat.full_rect()], 0, bc, Params.critical(3), rng, exact_cap=100)
    block_dynamics_step(st_, [lat.full_rect()], 0, bc, Params.critical(3), rng, exact_cap=100,
                        fallback_sweeps=5)
    assert st_.approximate


# -- driven runs and censoring -----------------------------------------------

def _fk_setup():
    lat = build_lattice(4, 4)
    bc = FKBoundary.free(lat)
    return lat, bc, Params.critical(2)


def test_empty_schedule_equals_uncensored():
    lat, bc, params = _fk_setup()
    a = run(ChainState(bc.extreme_config(0)), stream_for(FK_GLAUBER, bc, 4), 5.0, FK_GLAUBER, bc, params)
    sched = CensorSchedule([CensorInterval(0.0, 5.0)])
    b = run(ChainState(bc.extreme_config(0)), stream_for(FK_GLAUBER, bc, 4), 5.0, FK_GLAUBER, bc,
            params, sched)
    assert np.array_equal(a.config, b.config) and a.position == b.position


def test_censor_everything():
    lat, bc, params = _fk_setup()
    sched = CensorSchedule([CensorInterval(0.0, 3.0, region=EdgeSet([]))])
    st_ = run(ChainState(bc.extreme_config(1)), stream_for(FK_GLAUBER, bc, 4), 3.0, FK_GLAUBER,
              bc, params, sched)
    assert np.all(st_.config == 1) and st_.clock == 3.0 and st_.position > 0


def test_censored_reset_pattern_replays():
    lat, bc, params = _fk_setup()
    A, B = Rect(0, 2, 0, 4), Rect(2, 4, 0, 4)
    sched = CensorSchedule([CensorInterval(0.0, 2.0, region=A),
                            CensorInterval(2.0, 4.0, region=B, reset=1)])

    def go():
        st_ = ChainState(bc.extreme_config(0))
        return run(st_, stream_for(FK_GLAUBER, bc, 21), 4.0, FK_GLAUBER, bc, params, sched)

    x, y = go(), go()
    assert np.array_equal(x.config, y.config)
    # half-way: edges outside A untouched
    st_ = run(ChainState(bc.extreme_config(0)), stream_for(FK_GLAUBER, bc, 21), 2.0, FK_GLAUBER,
              bc, params, sched)
    from critpotts.dynamics import region_mask
    assert not st_.config[~region_mask(A, lat, "edges")].any()


def test_schedule_must_cover_run():
    lat, bc, params = _fk_setup()
    sched = CensorSchedule([CensorInterval(0.0, 1.0)])
    with pytest.raises(ValueError):
        run(ChainState(bc.extreme_config(0)), stream_for(FK_GLAUBER, bc, 1), 2.0, FK_GLAUBER, bc,
            params, sched)


def test_run_in_pieces_equals_one_run():
    lat, bc, params = _fk_setup()
    a = run(ChainState(bc.extreme_config(0)), stream_for(FK_GLAUBER, bc, 8), 6.0, FK_GLAUBER, bc, params)
    s = stream_for(FK_GLAUBER, bc, 8)
    b = ChainState(bc.extreme_config(0))
    for t in (1.5, 2.0, 6.0):
        b = run(b, s, t, FK_GLAUBER, bc, params)
    assert np.array_equal(a.config, b.config)


@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([1.0, 2.0, 3.3]))
@settings(max_examples=25, deadline=None)
def test_fk_heat_bath_monotone(seed, q):
    rng = np.random.default_rng(seed)
    lat = build_lattice(3, 3)
    bc = FKBoundary.wired_sides(lat, "W")
    params = Params.critical(q)
    lo = np.where(bc.dynamic_edges, rng.random(lat.num_edges) < 0.3, bc.fixed_values).astype(np.uint8)
    hi = lo | np.where(bc.dynamic_edges, rng.random(lat.num_edges) < 0.5, 0).astype(np.uint8)
    s = UpdateStream(seed, len(bc.dynamic_edge_list))
    for _ in range(20):
        J, U, _ = s.next(10)
        apply_fk_glauber(lo, J, U, bc, params)
        apply_fk_glauber(hi, J, U, bc, params)
        assert np.all(lo <= hi)


def test_run_cluster_advances_clock(rng):
    lat = build_lattice(3, 3)
    bc = PottsBoundary.free(lat)
    st_ = run_cluster(ChainState(bc.constant_config(1)), 7, "sw", bc, Params.critical(3), rng)
    assert st_.clock == 7
