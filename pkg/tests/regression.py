"""Seeded runs whose outputs are committed as regression fixtures.

``make_fixtures.py`` writes them to ``fixtures/regression.json``; the tests
recompute and compare exactly.
"""
import numpy as np

from critpotts.cli import sw_trace
from critpotts.coupling import (coalescence_time, coupling_time_scaling, family_boundary,
                                loglog_slope, replica_seed)
from critpotts.model import Params
from critpotts.observables import SamplerSettings, one_arm_probability

# committed seed sets
TORUS_Q2_SEED = 2024
SLOWDOWN_SEED = 7
SLOWDOWN_SIZES = (9, 18, 27)
SLOWDOWN_REPLICAS = 8
SLOWDOWN_CAP = 20000.0
POLY_SEED = 11
POLY_SIZES = (8, 16, 32)
POLY_REPLICAS = 9
POLY_CAP = 20000.0
TRACE_SEEDS = (1, 2, 3, 4, 5)
TRACE_WINDOW = (2000, 3000)
ONE_ARM_SEED = 21
ONE_ARM_SIZES = (8, 16, 32)


def coupling_8x8_torus_q2():
    bc = family_boundary("torus", 8)
    times = [coalescence_time(bc, Params.critical(2), replica_seed(TORUS_Q2_SEED, 8, r), 1e4)[0]
             for r in range(50)]
    return {"times": times, "median": float(np.median(times))}


def slowdown():
    """q=25: paired coalescence sweeps, torus against free boundary."""
    params = Params.critical(25)
    out = {}
    for fam in ("torus", "free"):
        t = coupling_time_scaling(list(SLOWDOWN_SIZES), fam, params, SLOWDOWN_REPLICAS,
                                  SLOWDOWN_SEED, SLOWDOWN_CAP)
        out[fam] = {str(n): {"times": t.times(n).tolist(), "censored": t.censored(n).tolist()}
                    for n in SLOWDOWN_SIZES}
    return out


def polynomial_regime():
    """Torus coalescence medians for q=3 and q=25 over the same sizes.

    With three sizes doubling in n the least-squares slope equals
    ``(log m_32 - log m_8) / log 4``, so a censored q=25 median at n=32
    (true value above the cap) and an uncensored one at n=8 give a lower
    bound on its slope.
    """
    out = {}
    for q in (3, 25):
        t = coupling_time_scaling(list(POLY_SIZES), "torus", Params.critical(q), POLY_REPLICAS,
                                  POLY_SEED, POLY_CAP)
        med = t.medians()
        out[str(q)] = {
            "medians": med.tolist(),
            "censored": [int(t.censored(n).sum()) for n in POLY_SIZES],
            "slope": loglog_slope(POLY_SIZES, med),
        }
    return out


def trace_margins():
    """Largest-cluster means over the window for free and periodic SW traces."""
    params = Params.critical(5)
    a, b = TRACE_WINDOW
    rows = []
    for s in TRACE_SEEDS:
        free = sw_trace(params, 64, b, s, False)
        per = sw_trace(params, 64, b, s, True)
        rows.append({"seed": s, "free": float(free[a:b].mean()), "periodic": float(per[a:b].mean()),
                     "head_free": free[:5].tolist(), "head_periodic": per[:5].tolist()})
    return rows


def one_arm_q3():
    """One-arm frequencies at q=3, p_c, free boundary, and the fitted decay exponent."""
    est = [one_arm_probability(Params.critical(3), n, "free", 8, ONE_ARM_SEED,
                               SamplerSettings(200, 5, 100)) for n in ONE_ARM_SIZES]
    vals = [e.value for e in est]
    return {"values": vals, "trials": [e.trials for e in est],
            "exponent": -loglog_slope(ONE_ARM_SIZES, vals)}


FAST = {"coupling_8x8_torus_q2": coupling_8x8_torus_q2, "sw_trace_q5_n64": trace_margins,
        "one_arm_q3": one_arm_q3}
SLOW = {"slowdown_q25": slowdown, "polynomial_q3_q25": polynomial_regime}
