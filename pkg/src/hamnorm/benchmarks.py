"""Bundled benchmark Hamiltonians for tests, the CLI self-test and the
acceptance suite.

These are artifact-chosen model problems (rotors with trigonometric forcing,
and a rotor coupled to two oscillators); they are not data from any specific
physical system.
"""

from __future__ import annotations

import math

import numpy as np

from .series import PoissonSeries, Signature, TruncationPolicy

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def kolmogorov_benchmark(eps=1e-3, R=10, K=2, drop_eps=1e-300):
    """Two rotors near an invariant torus:

        H = omega . p + (p1^2 + p2^2)/2 + eps (cos q1 + cos(q1 - q2))

    with the golden-mean frequency vector omega = (1, (sqrt(5)-1)/2).
    Returns ``(H, policy)`` sized for ``R`` normalization steps."""
    sig = Signature(2, 0)
    policy = TruncationPolicy(ell_max=4, trig_max=R * K, K=K, drop_eps=drop_eps)
    H = PoissonSeries.action_linear(sig, policy, [1.0, GOLDEN])
    p1 = PoissonSeries.action_linear(sig, policy, [1.0, 0.0])
    p2 = PoissonSeries.action_linear(sig, policy, [0.0, 1.0])
    H = H + (p1 * p1 + p2 * p2).scale(0.5)
    H = H + PoissonSeries.cosine(sig, policy, (1, 0), eps)
    H = H + PoissonSeries.cosine(sig, policy, (1, -1), eps)
    return H, policy


def elliptic_benchmark(eps=1e-3, R=8, K=2, drop_eps=1e-300):
    """One rotor plus two oscillators with cubic/quartic couplings:

        H = omega p + Omega . J + p^2/2
            + eps [ cos q + sqrt(J1) cos(q + phi1) + sqrt(J1 J2) cos(phi1 - phi2 + q)
                    + x1^2 x2-type cubic + p sin(2q) ]

    (all oscillator factors written through z_j = sqrt(J_j) e^{i phi_j}).
    Frequencies are nonresonant: omega = 1, Omega = (0.3170, 0.1933).
    Returns ``(H, policy)``."""
    sig = Signature(1, 2)
    policy = TruncationPolicy(ell_max=6, trig_max=R * K, K=K, drop_eps=drop_eps)
    omega = [1.0]
    Omega = [0.3170424466, 0.1933052186]
    H = PoissonSeries.action_linear(sig, policy, omega)
    H = H + PoissonSeries.oscillator_linear(sig, policy, Omega)
    p = PoissonSeries.action_linear(sig, policy, [1.0])
    H = H + (p * p).scale(0.5)
    c = PoissonSeries.cosine
    H = H + c(sig, policy, (1,), eps)                       # ell = 0
    H = H + c(sig, policy, (1,), eps, a=(1, 0))             # ell = 1
    H = H + c(sig, policy, (2,), 0.7 * eps, a=(0, 1))       # ell = 1
    H = H + c(sig, policy, (1,), 0.5 * eps, a=(1, 0), b=(0, 1))  # ell = 2
    H = H + c(sig, policy, (1,), 0.4 * eps, a=(1, 1))       # ell = 2
    H = H + PoissonSeries.sine(sig, policy, (2,), 0.3 * eps, m=(1,))  # ell = 2
    # cubic oscillator coupling ~ x1^2 x2: (z1 + zb1)^2 (z2 + zb2)/(2 sqrt 2)
    z1 = PoissonSeries.from_terms(sig, policy, [((0,), (0,), (1, 0), (0, 0), 1.0)])
    z2 = PoissonSeries.from_terms(sig, policy, [((0,), (0,), (0, 1), (0, 0), 1.0)])
    x1 = (z1 + z1.conjugate()).scale(1 / math.sqrt(2))
    x2 = (z2 + z2.conjugate()).scale(1 / math.sqrt(2))
    cubic = (x1 * x1 * x2).scale(0.6 * eps)
    cosq = c(sig, policy, (1,), 1.0)
    H = H + cubic * cosq + cubic
    return H, policy


# ---------------------------------------------------------------------------
# secular fixtures
# ---------------------------------------------------------------------------

SEC_SIG = Signature(0, 2)


def _sec_terms(pol, *terms):
    return PoissonSeries.from_terms(SEC_SIG, pol, list(terms))


def _sec_blocks(pol):
    """Rotation-invariant building blocks of two-planet secular models:
    the actions ``G1, G2``, the balanced coupling ``xi1 xi2 + eta1 eta2``
    and the imbalance-two combinations fed by the angular-momentum deficit
    (``xi1 xi2 - eta1 eta2`` and ``xi2^2 - eta2^2``)."""
    G1 = _sec_terms(pol, ((), (), (1, 0), (1, 0), 1.0))
    G2 = _sec_terms(pol, ((), (), (0, 1), (0, 1), 1.0))
    CPL = _sec_terms(pol, ((), (), (1, 0), (0, 1), 1.0),
                     ((), (), (0, 1), (1, 0), 1.0))
    ALN = _sec_terms(pol, ((), (), (1, 1), (0, 0), 1.0),
                     ((), (), (0, 0), (1, 1), 1.0))
    Q2 = _sec_terms(pol, ((), (), (0, 2), (0, 0), 1.0),
                    ((), (), (0, 0), (0, 2), 1.0))
    return G1, G2, CPL, ALN, Q2


def secular_oracle_toy(mu=1e-4, c_kep=0.7, eps=0.3):
    """Minimal single-harmonic averaging toy: ``h_kep2 = c L1^2`` and one
    fast forcing ``eps cos(lambda1)``.  The order-two secular correction is
    the constant ``+ c (mu eps)^2 / (2 n1^2)`` (the Lie-series expansion of
    this toy terminates, so a brute-force oracle is exact).

    Returns ``(h_kep2, grid, nstar, mu)``."""
    sig = Signature(2, 2)
    pol = TruncationPolicy(ell_max=8, trig_max=16, K=1)
    h_kep2 = PoissonSeries.from_terms(
        sig, pol, [((2, 0), (0, 0), (0, 0), (0, 0), c_kep)]
    )
    grid = {(0, 0, 0): PoissonSeries.cosine(sig, pol, (1, 0), eps)}
    return h_kep2, grid, np.array([1.0, GOLDEN]), mu


def secular_toy_grid(mu=1e-4, D2=0.17):
    """A structurally rich perturbation grid: fast forcing, fast-modulated
    secular quadratics and quartics, deficit-weighted pieces and fast-action
    cross terms.  Returns ``(h_kep2, grid, nstar, mu, D2)``."""
    sig = Signature(2, 2)
    pol = TruncationPolicy(ell_max=8, trig_max=16, K=1)
    t = PoissonSeries.from_terms
    c, s = PoissonSeries.cosine, PoissonSeries.sine
    h_kep2 = t(sig, pol, [((2, 0), (0, 0), (0, 0), (0, 0), -0.8),
                          ((0, 2), (0, 0), (0, 0), (0, 0), 0.35),
                          ((1, 1), (0, 0), (0, 0), (0, 0), -0.12)])
    grid = {}
    grid[(0, 0, 0)] = c(sig, pol, (1, 0), 0.4) + c(sig, pol, (1, -1), 0.25)
    grid[(0, 0, 2)] = (
        t(sig, pol, [((0, 0), (0, 0), (1, 0), (1, 0), -0.31),
                     ((0, 0), (0, 0), (0, 1), (0, 1), -0.11),
                     ((0, 0), (0, 0), (1, 0), (0, 1), 0.08),
                     ((0, 0), (0, 0), (0, 1), (1, 0), 0.08)])
        + c(sig, pol, (2, -1), 0.09, a=(1, 0), b=(1, 0))
        + c(sig, pol, (1, 0), 0.05, a=(1, 0), b=(0, 1))
        + c(sig, pol, (1, 0), 0.05, a=(0, 1), b=(1, 0))
        + s(sig, pol, (1, -2), 0.04, a=(0, 1), b=(0, 1))
    )
    grid[(1, 0, 2)] = (
        t(sig, pol, [((0, 0), (0, 0), (1, 0), (1, 0), -0.06)])
        + c(sig, pol, (1, -1), 0.03, a=(0, 1), b=(0, 1))
    )
    grid[(0, 0, 4)] = (
        t(sig, pol, [((0, 0), (0, 0), (1, 1), (1, 1), 0.02)])
        + c(sig, pol, (3, 0), 0.015, a=(2, 0), b=(2, 0))
    )
    grid[(0, 1, 0)] = (c(sig, pol, (1, 0), 0.21, m=(1, 0))
                       + s(sig, pol, (1, -1), 0.13, m=(0, 1)))
    grid[(0, 1, 2)] = c(sig, pol, (1, 0), 0.07, m=(1, 0), a=(1, 0), b=(1, 0))
    return h_kep2, grid, np.array([1.0, GOLDEN]), mu, D2


def hd4732_like_hsec():
    """Secular-model stand-in with the structure of a two-planet system near
    an apsidally locked configuration: an even polynomial of degree 8 in the
    two Poincare pairs, rotation-symmetric except for small imbalance-two
    couplings.  This is an artifact-chosen fixture, NOT published data for
    HD 4732 (whose expansion coefficients are not public).

    Returns ``(H_sec, x_init)`` where ``x_init = (x1, x2)`` seeds the
    periodic-point search on the section ``y2 = 0, x2 > 0``."""
    pol = TruncationPolicy(ell_max=8, trig_max=0, K=1)
    G1, G2, CPL, ALN, Q2 = _sec_blocks(pol)
    H = (G1.scale(-0.12) + G2.scale(-0.05) + CPL.scale(0.03)
         + (G1 * G1).scale(0.04) + (G1 * G2).scale(0.03)
         + (G2 * G2).scale(0.02)
         + (CPL * G1).scale(0.015) + (CPL * G2).scale(-0.01)
         + (G1 * G1 * G2).scale(0.004) + (CPL * CPL * G2).scale(0.002)
         + (ALN * G1).scale(0.006) + (ALN * G2).scale(-0.004)
         + (Q2 * G1).scale(0.003) + (ALN * CPL).scale(0.002)
         + (Q2 * G1 * G2).scale(0.001))
    x_init = mode_section_start(H, 0.3, aligned=True)
    return H, x_init


def mode_section_start(H_sec, amplitude, aligned=True):
    """Section start ``(x1, x2)`` near a normal mode of the quadratic part.

    The quadratic form ``h11 G1 + h22 G2 + h12 (xi1 xi2 + eta1 eta2)`` has
    two periodic normal modes; ``aligned`` selects the one with apsidal
    difference 0 (same-sign eigenvector), otherwise the anti-aligned one."""
    h11 = H_sec.coefficient((), (), (1, 0), (1, 0)).real
    h22 = H_sec.coefficient((), (), (0, 1), (0, 1)).real
    h12 = H_sec.coefficient((), (), (1, 0), (0, 1)).real
    M = np.array([[h11, h12], [h12, h22]])
    _, v = np.linalg.eigh(M)
    same = v[0, :] * v[1, :] > 0
    col = int(np.argmax(same if aligned else ~same))
    vec = v[:, col]
    if vec[1] < 0:
        vec = -vec  # put the start on the section gate xi2 > 0
    xi = amplitude * vec
    from .secular import resonant_from_poincare

    x1, _, x2, _ = resonant_from_poincare(xi, np.zeros(2))
    return x1, x2


def hd4732_like_pert_grid(mu=2.4e-3):
    """Fast-variable parent of :func:`hd4732_like_hsec`: a perturbation grid
    whose zero-harmonic secular content reproduces the stand-in polynomial
    (up to the order-``mu^2`` corrections the averaging adds) plus fast
    forcing terms exercising the order-two machinery.  Artifact-chosen, not
    derived from any disturbing function.

    Returns ``(h_kep2, grid, nstar, mu)``."""
    sig = Signature(2, 2)
    pol = TruncationPolicy(ell_max=10, trig_max=18, K=1)
    t = PoissonSeries.from_terms
    c, s = PoissonSeries.cosine, PoissonSeries.sine
    nstar = np.array([6.37, 0.84])  # fast mean motions, far from resonance
    h_kep2 = t(sig, pol, [((2, 0), (0, 0), (0, 0), (0, 0), -9.5),
                          ((0, 2), (0, 0), (0, 0), (0, 0), -0.63)])

    def lift(f):
        # re-home a secular-signature series on the fast signature
        terms = [((0, 0), (0, 0), key.a, key.b, cf) for key, cf in f.items()]
        return t(sig, pol, terms)

    sec_pol = TruncationPolicy(ell_max=8, trig_max=0, K=1)
    G1, G2, CPL, ALN, Q2 = (lift(b) for b in _sec_blocks(sec_pol))
    grid = {}
    grid[(0, 0, 2)] = (G1.scale(-0.12) + G2.scale(-0.05) + CPL.scale(0.03)
                       ).scale(1.0 / mu) + (
        c(sig, pol, (2, -1), 0.04, a=(1, 0), b=(1, 0))
        + c(sig, pol, (1, 0), 0.03, a=(1, 0), b=(0, 1))
        + c(sig, pol, (1, 0), 0.03, a=(0, 1), b=(1, 0)))
    grid[(0, 0, 4)] = ((G1 * G1).scale(0.04) + (G1 * G2).scale(0.03)
                       + (G2 * G2).scale(0.02) + (CPL * G1).scale(0.015)
                       + (CPL * G2).scale(-0.01)).scale(1.0 / mu) + (
        s(sig, pol, (1, -2), 0.02, a=(1, 1), b=(1, 1)))
    grid[(0, 0, 6)] = ((G1 * G1 * G2).scale(0.004)
                       + (CPL * CPL * G2).scale(0.002)).scale(1.0 / mu)
    grid[(1, 0, 2)] = c(sig, pol, (1, -1), 0.05, a=(0, 1), b=(0, 1))
    grid[(1, 0, 4)] = ((ALN * G1).scale(0.006 / _D2_LIKE)
                       + (ALN * G2).scale(-0.004 / _D2_LIKE)
                       + (Q2 * G1).scale(0.003 / _D2_LIKE)
                       + (ALN * CPL).scale(0.002 / _D2_LIKE)
                       ).scale(1.0 / mu)
    grid[(1, 0, 6)] = (Q2 * G1 * G2).scale(0.001 / (_D2_LIKE * mu))
    grid[(0, 0, 0)] = c(sig, pol, (1, 0), 0.9) + c(sig, pol, (1, -1), 0.6)
    grid[(0, 1, 0)] = (c(sig, pol, (1, 0), 0.5, m=(1, 0))
                       + s(sig, pol, (1, -1), 0.3, m=(0, 1)))
    grid[(0, 1, 2)] = c(sig, pol, (1, 0), 0.2, m=(1, 0), a=(1, 0), b=(1, 0))
    return h_kep2, grid, nstar, mu


_D2_LIKE = 0.18  # deficit scale of the element fixture (i_mut ~ 2 deg, e ~ 0.1-0.2)


def hd4732_like_elements(imut_deg=2.0):
    """Orbital elements shaped like the HD 4732 minimal-mass solution:
    Table-like semi-major axes, eccentricities and pericenters, with the
    mutual inclination split symmetrically about edge-on and the masses
    scaled by ``1/sin(iota)``.  Artifact fixture, not a published fit."""
    from .secular import M_JUP_IN_MSUN, OrbitalElements

    i1 = 90.0 - imut_deg / 2.0
    i2 = 90.0 + imut_deg / 2.0
    msini = 2.37 * M_JUP_IN_MSUN
    return OrbitalElements(
        m0=1.74,
        m=[msini / math.sin(math.radians(i1)),
           msini / math.sin(math.radians(i2))],
        a=[1.19, 4.60], e=[0.13, 0.23],
        iota=[i1, i2], M=[0.0, 0.0],
        omega_peri=[85.0, 118.0], Omega_node=[0.0, 0.0],
    )
