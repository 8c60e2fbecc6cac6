"""Poisson series basics: building blocks, brackets, and the class grid.

The whole engine rests on one data structure: a sparse series whose terms
are  c * p^m * exp(i k.q) * z^a zbar^b  on a signature of n1 action-angle
pairs and n2 complex oscillators.  This script builds a few by hand, takes
brackets, and shows how `classify` organizes a series into the (ell, s)
cells that the normal-form algorithms manipulate.
"""

import numpy as np

from hamnorm.series import (
    PoissonSeries,
    Signature,
    TruncationPolicy,
    classify,
    lie_series,
    norm,
    poisson_bracket,
)

sig = Signature(2, 1)  # two action-angle pairs, one oscillator
pol = TruncationPolicy(ell_max=8, trig_max=8, K=2)

# H0 = omega . p, a forcing term, and an oscillator action J1 = z zbar
omega = [1.0, (np.sqrt(5) - 1) / 2]
H0 = PoissonSeries.action_linear(sig, pol, omega)
forcing = PoissonSeries.cosine(sig, pol, (1, -1), 1e-2)
J1 = PoissonSeries.from_terms(sig, pol, [((0, 0), (0, 0), (1,), (1,), 1.0)])

print("H0 terms:", len(H0.coeffs), " norm:", norm(H0))

# {omega.p, cos(q1-q2)} = (w1 - w2) sin(q1 - q2)
br = poisson_bracket(H0, forcing)
print("{H0, eps cos(q1-q2)} coefficient of e^{i(q1-q2)}:",
      br.coefficient((0, 0), (1, -1)))

# oscillator bracket: {z, zbar} = i, so {J1, z} = -i z ... an eigenvector
z = PoissonSeries.from_terms(sig, pol, [((0, 0), (0, 0), (1,), (0,), 1.0)])
print("{J1, z} / z coefficient:", poisson_bracket(J1, z).coefficient(
    (0, 0), (0, 0), (1,), (0,)))

# Lie series: exp(L_chi) moves H0; for chi = c sin(q1) the action picks up
# the exact increment -c cos q1 against p1's conjugate angle
chi = PoissonSeries.sine(sig, pol, (1, 0), 1e-3)
moved = lie_series(chi, H0)
print("lie_series(chi, H0) k=(1,0) coefficient:",
      moved.coefficient((0, 0), (1, 0)))

# classify: each term lands in the cell (ell, s) with ell = 2|m| + |a| + |b|
# and s = ceil(|k| / K)
mixed = H0 + forcing + J1.scale(0.3)
cells = classify(mixed)
print("\ncells of H0 + forcing + 0.3 J1:")
for (ell, s), cell in sorted(cells.items()):
    print(f"  (ell={ell}, s={s})  {len(cell.coeffs)} term(s), "
          f"norm {norm(cell):.3e}")
