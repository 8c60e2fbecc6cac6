"""Kolmogorov normal form: constructing an invariant torus step by step.

Starting from a near-integrable two-rotor Hamiltonian, each step solves two
homological equations and pushes the result through Lie series.  After r
steps the perturbation starts at order r+1: the generating-function norms
decay geometrically and the torus p = 0 carries linear flow with frequency
omega.  The payoff is semi-analytic integration: map the torus, flow
linearly, compare against direct RK4.
"""

import numpy as np

from hamnorm.benchmarks import kolmogorov_benchmark
from hamnorm.flows import (
    PhasePoint,
    orbit_discrepancy,
    rk4_integrate,
    semi_analytic_orbit,
)
from hamnorm.kolmogorov import (
    DiophantineParams,
    build_state,
    normalize,
    torus_map,
)

H, _ = kolmogorov_benchmark(eps=1e-3, R=10)
dio = DiophantineParams()

state = build_state(H)
state, history = normalize(state, 10, dio)

print("step   |chi1|      |chi2|      min divisor")
for row in history:
    print(f"{row['r']:4d}  {row['norm_chi1']:.3e}  {row['norm_chi2']:.3e}"
          f"  {row['min_divisor_encountered']:.3e}")

# every low-degree cell with s <= r is annihilated exactly
low = [(ell, s) for (ell, s) in state.grid.cells
       if ell <= 2 and s <= state.step]
print("\nsurviving low-degree cells:", low or "none")
print("frequencies:", state.omega)

# semi-analytic orbit vs direct integration over 10 periods
psi = torus_map(state.log)
Q0 = np.array([0.3, 1.1])
T = 10 * 2 * np.pi / state.omega[0]
t_grid = np.linspace(0.0, T, 201)
orbit = semi_analytic_orbit(psi, state.omega, Q0, t_grid)
x0 = PhasePoint.from_vec(H.sig, orbit[0])
traj = rk4_integrate(H, x0, T / 8000, 8000, record_every=40)
sup, rms = orbit_discrepancy(orbit, traj.states, H.sig)
print(f"\nsemi-analytic vs RK4 over 10 periods: sup {sup:.3e}, rms {rms:.3e}")
print(f"RK4 relative energy drift: {traj.energy_drift:.3e}")
