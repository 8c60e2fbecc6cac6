"""Elliptic (lower-dimensional) torus: normal form with transverse
oscillators.

The benchmark couples one rotor to two oscillators.  Each step runs three
stages -- remove the angle-only cell (chi0), the oscillator-linear cell
(chi1), then the action-linear and mixed quadratic parts (X2/Y2) -- and
re-diagonalizes the transverse quadratic form so the oscillator block stays
exactly Omega . J.  The surviving torus has dimension 1 with stable
transverse frequencies Omega.
"""

import numpy as np

from hamnorm.benchmarks import elliptic_benchmark
from hamnorm.elliptic import (
    MelnikovParams,
    build_elliptic_state,
    elliptic_torus_orbit,
    normalize_elliptic,
)

H, _ = elliptic_benchmark(eps=1e-3, R=8)
mel = MelnikovParams()

state = build_elliptic_state(H)
print("initial omega:", state.omega, " Omega:", state.Omega)

state, history = normalize_elliptic(state, 8, mel)

print("\nstep  |chi0|      |chi1|      |X2|        |Y2|        diag res")
for row in history:
    print(f"{row['r']:4d}  {row['norm_chi0']:.3e}  {row['norm_chi1']:.3e}"
          f"  {row['norm_X2']:.3e}  {row['norm_Y2']:.3e}"
          f"  {row['diag_residual']:.1e}")

print("\nfinal omega:", state.omega, " Omega:", state.Omega)
low = [(ell, s) for (ell, s) in state.grid.cells
       if ell <= 2 and s <= state.step]
print("surviving low-degree cells:", low or "none")

# points on the torus: psi(0, Q0 + omega t, 0) stays on the invariant set
for t in (0.0, 1.0, 2 * np.pi / state.omega[0]):
    pt = elliptic_torus_orbit(state, [0.7], t)
    print(f"t={t:8.4f}  p={pt.p[0]:+.3e}  q={pt.q[0]:+.6f}  "
          f"max J={pt.J.max():.3e}")
