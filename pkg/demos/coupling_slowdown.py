"""Grand-coupling coalescence on the torus and on the free box for q=3 and q=25.

Periodic boundary at large q keeps the ordered and disordered phases apart,
so the coupled chains take far longer to meet than under free boundary.

Run: python3 demos/coupling_slowdown.py   (about a minute)
"""
import numpy as np

from critpotts.coupling import coupling_time_scaling
from critpotts.model import Params

for q in (3, 25):
    params = Params.critical(q)
    for family in ("free", "torus"):
        tab = coupling_time_scaling([6, 9], family, params, replicas=4, seed=1, t_max=2000.0)
        meds = ", ".join(f"n={n}: {np.median(tab.times(n)):.0f}" for n in tab.sizes())
        print(f"q={q:<3} {family:<6} median sweeps {meds}")
