"""Exact spectral gaps of the four chains on a 2x2 box at the critical point.

Run: python3 demos/exact_small_chains.py
"""
from critpotts import spectral
from critpotts.lattice import build_lattice
from critpotts.model import Params, PottsBoundary

lat = build_lattice(2, 2)
bc = PottsBoundary.free(lat)
for q in (2, 3):
    params = Params.critical(q)
    rep = spectral.check_ullrich(bc, params)
    print(f"q={q}  p={params.p:.4f}")
    for line in rep.lines():
        print("   ", line)
    # exact mixing time on a box small enough for the full distance computation
    small = PottsBoundary.free(build_lattice(1, 2)).to_fk()
    space, K = spectral.enumerate_kernel(spectral.FK_GLAUBER, small, params)
    br = spectral.mixing_bracket(K, space.pi)
    print(f"    1x2 fk-glauber: {br.lower:.1f} <= t_mix={br.t_mix} <= {br.upper:.1f}")
