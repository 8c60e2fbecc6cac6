"""Planetary pipeline: from orbital elements to a KAM torus.

The full chain on the bundled two-planet fixture:

  1. orbital elements -> Poincare variables, mutual inclination, and the
     inclination parameter D2 from the angular-momentum reduction;
  2. order-two averaging of the fast angles -> secular Hamiltonian H_sec;
  3. a periodic point of the secular flow on the section y2 = 0, x2 > 0,
     and the chart cascade centering the expansion there;
  4. elliptic normal-form steps to clean the torus;
  5. re-expansion around a target action J* and Kolmogorov steps;
  6. a semi-analytic orbit checked against direct RK4 integration.

Policies here are kept small so the script runs in about a minute; the
production scale (degree 16, trig_max 40, 19+19 steps) is exercised by the
acceptance suite.
"""

import numpy as np

from hamnorm.benchmarks import hd4732_like_elements, hd4732_like_pert_grid
from hamnorm.elliptic import MelnikovParams, build_elliptic_state, \
    normalize_elliptic
from hamnorm.flows import (
    PhasePoint,
    orbit_discrepancy,
    rk4_integrate,
    semi_analytic_orbit,
)
from hamnorm.kolmogorov import DiophantineParams, normalize, torus_map
from hamnorm.secular import (
    average_order2,
    chart_cascade,
    compute_D2,
    elements_to_poincare,
    modulus_from_mutual_inclination,
    mutual_inclination,
    seed_kam,
)

# 1. elements and the angular-momentum reduction
el = hd4732_like_elements()
Lam, lam, xi, eta = elements_to_poincare(el)
imut = mutual_inclination(el.iota[0], el.iota[1],
                          el.Omega_node[1] - el.Omega_node[0])
C = modulus_from_mutual_inclination(Lam, el.e, imut)
D2 = compute_D2(Lam, C)
print(f"i_mut = {imut:.6f} deg   D2 = {D2:.6f}")

# 2. order-two averaging of the fast angles
h_kep2, grid, nstar, mu = hd4732_like_pert_grid()
H_sec = average_order2(h_kep2, grid, nstar, mu, D2=D2)
print(f"H_sec: {len(H_sec.coeffs)} terms, degrees "
      f"{sorted(set(H_sec.ell_degrees().tolist()))}")

# 3. center on a periodic point of the section y2 = 0 (precomputed for the
# fixture; see find_periodic_section_point for the search itself)
x1s, x2s = 0.10605002389513268, 0.29998922799478955
I_star = (x1s**2 + x2s**2) / 2.0
H0, chart = chart_cascade(H_sec, I_star, x1s, ell_max=8, trig_max=12, K=2)
print(f"chart: a = {chart.a:.6e}, b = {chart.b:.6e}, "
      f"Omega0 = {chart.Omega0:.6e}")

# 4. elliptic normal form
mel = MelnikovParams()
est = build_elliptic_state(H0)
est, ehist = normalize_elliptic(est, 5, mel)
print("elliptic |chi1| per step:",
      ["%.2e" % row["norm_chi1"] for row in ehist])
print("frequencies: omega =", est.omega, " Omega =", est.Omega)

# 5. seed a target torus at J* and run Kolmogorov steps
seeded, p_star = seed_kam(est, 1e-4, ell_max=8)
H_seed = seeded.hamiltonian()  # flow of record, before normalization
kst, khist = normalize(seeded, 4, DiophantineParams())
print("KAM |chi2| per step:", ["%.2e" % row["norm_chi2"] for row in khist])

# 6. semi-analytic orbit vs direct integration over two periods
psi = torus_map(kst.log)
T = 2 * 2 * np.pi / abs(kst.omega[0])
t_grid = np.linspace(0.0, T, 101)
orbit = semi_analytic_orbit(psi, kst.omega, [0.2, 1.0], t_grid)
x0 = PhasePoint.from_vec(kst.sig, orbit[0])
traj = rk4_integrate(H_seed, x0, T / 4000, 4000, record_every=40)
sup, rms = orbit_discrepancy(orbit, traj.states, kst.sig)
print(f"orbit discrepancy over 2 periods: sup {sup:.3e}, rms {rms:.3e}")
