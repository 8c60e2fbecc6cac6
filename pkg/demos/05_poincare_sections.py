"""Poincare sections of the secular flow.

The secular Hamiltonian of the planetary fixture has two degrees of freedom
in the resonant chart (x1, y1, x2, y2).  Crossings of the section y2 = 0,
x2 > 0 reveal the phase-space structure: closed curves around the periodic
point of the apsidal-locked family.  The same data is produced in CSV form
by `hamnorm poincare`.
"""

import numpy as np

from hamnorm.benchmarks import hd4732_like_hsec
from hamnorm.flows import PhasePoint, SectionSpec, poincare_sections
from hamnorm.secular import poincare_from_resonant, resonant_from_poincare

H_sec, x_init = hd4732_like_hsec()
print("fixture seed on the section (x1, x2) =", x_init)

# in the flow's (xi1, xi2, eta1, eta2) layout the section y2 = 0, x2 > 0
# reads eta2 = 0 with gate xi2 > 0
spec = SectionSpec(coordinate=3, gate_index=1, gate_sign=1)

for x1 in (0.05, 0.10605, 0.16):
    xi, eta = poincare_from_resonant(x1, 0.0, 0.3, 0.0)
    start = PhasePoint([], [], (xi**2 + eta**2) / 2, np.arctan2(eta, xi))
    pts, times, ok = poincare_sections(H_sec, start, spec, 8, dt=0.05)
    # report crossings in the resonant chart
    rows = [resonant_from_poincare(v[:2], v[2:]) for v in pts]
    spread = np.ptp([r[0] for r in rows]) if rows else float("nan")
    print(f"x1 = {x1:7.5f}: {len(rows)} crossings, "
          f"x1-spread on section {spread:.3e}")
    for t, (rx1, ry1, rx2, ry2) in list(zip(times, rows))[:3]:
        print(f"    t={t:9.3f}  x1={rx1:+.6f}  y1={ry1:+.6f}  "
              f"x2={rx2:+.6f}  y2={ry2:+.1e}")
