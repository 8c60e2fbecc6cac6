"""Secular two-planet pipeline.

Orbital elements to Poincare canonical variables, mutual-inclination and
angular-momentum bookkeeping, the order-two-in-the-masses averaging over the
fast orbital angles, the coordinate cascade down to a chart centered on a
periodic orbit of the secular flow, and the seeding of the torus
constructions from the resulting near-elliptic-equilibrium Hamiltonian.

Unit and angle conventions: file-boundary angles are degrees, everything
internal is radians; the gravitational constant and masses are whatever
consistent system the element set declares (the bundled fixtures use
AU / yr / solar masses with G = 4 pi^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import binom

from .flows import PhasePoint, SectionSpec, poincare_sections
from .kolmogorov import KolmogorovState, SmallDivisorError, build_state
from .series import PoissonSeries, Signature, TruncationPolicy, poisson_bracket

__all__ = [
    "M_JUP_IN_MSUN",
    "OrbitalElements",
    "SecularChart",
    "elements_to_poincare",
    "poincare_to_elements",
    "angular_momentum_modulus",
    "mutual_inclination",
    "mutual_inclination_from_momenta",
    "modulus_from_mutual_inclination",
    "compute_D2",
    "average_order2",
    "resonant_from_poincare",
    "poincare_from_resonant",
    "chart_cascade",
    "find_periodic_section_point",
    "refine_Istar",
    "seed_kam",
]

_SQRT2 = math.sqrt(2.0)

#: Jupiter mass in solar masses (IAU nominal mass ratio).
M_JUP_IN_MSUN = 1.0 / 1047.348644


# ---------------------------------------------------------------------------
# orbital elements and Poincare variables
# ---------------------------------------------------------------------------


@dataclass
class OrbitalElements:
    """Heliocentric orbital elements of a two-planet system.

    Parameters
    ----------
    m0 : float
        Mass of the star.
    m : array-like, shape (2,)
        Planetary masses, same unit as ``m0``.
    a, e : array-like, shape (2,)
        Semi-major axes and eccentricities.
    iota, M, omega_peri, Omega_node : array-like, shape (2,)
        Inclinations, mean anomalies, arguments of pericenter and nodal
        longitudes, all in degrees.
    G : float
        Gravitational constant in matching units (default: AU/yr/Msun).
    """

    m0: float
    m: np.ndarray
    a: np.ndarray
    e: np.ndarray
    iota: np.ndarray
    M: np.ndarray
    omega_peri: np.ndarray
    Omega_node: np.ndarray
    G: float = 4.0 * math.pi**2

    def __post_init__(self):
        for name in ("m", "a", "e", "iota", "M", "omega_peri", "Omega_node"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if self.m0 <= 0 or np.any(self.m <= 0):
            raise ValueError("masses must be positive")
        if np.any(self.a <= 0):
            raise ValueError("semi-major axes must be positive")
        if np.any((self.e <= 0) | (self.e >= 1)):
            raise ValueError("eccentricities must lie in (0, 1)")


def elements_to_poincare(el: OrbitalElements):
    """Poincare canonical variables ``(Lambda, lambda, xi, eta)``.

    ``Lambda_j = m0 m_j/(m0+m_j) sqrt(G (m0+m_j) a_j)``, ``lambda_j = M_j +
    omega_j`` and the secular pair is ``xi = sqrt(2 Lambda) sqrt(1 -
    sqrt(1-e^2)) cos(omega)``, ``eta = -sqrt(...) sin(omega)``.  Angles are
    returned in radians.
    """
    Mtot = el.m0 + el.m
    Lam = el.m0 * el.m / Mtot * np.sqrt(el.G * Mtot * el.a)
    om = np.radians(el.omega_peri)
    lam = np.radians(el.M) + om
    rho = np.sqrt(2.0 * Lam) * np.sqrt(1.0 - np.sqrt(1.0 - el.e**2))
    xi = rho * np.cos(om)
    eta = -rho * np.sin(om)
    return Lam, lam, xi, eta


def poincare_to_elements(m0, m, G, Lam, lam, xi, eta):
    """Analytic inverse of :func:`elements_to_poincare`.

    Returns ``(a, e, M, omega_peri)`` with the angles in degrees; the
    inclination/node pair is not recoverable (it is reduced away by the
    angular-momentum reduction).
    """
    m = np.asarray(m, dtype=float)
    Lam = np.asarray(Lam, dtype=float)
    Mtot = m0 + m
    beta = m0 * m / Mtot
    a = (Lam / beta) ** 2 / (G * Mtot)
    Gam = (np.asarray(xi) ** 2 + np.asarray(eta) ** 2) / 2.0
    e = np.sqrt(1.0 - (1.0 - Gam / Lam) ** 2)
    om = np.arctan2(-np.asarray(eta), np.asarray(xi))
    M = np.degrees(np.asarray(lam) - om) % 360.0
    return a, e, M, np.degrees(om) % 360.0


def _checked_arccos(c, tol):
    if abs(c) > 1.0 + tol:
        raise ValueError(f"arccos argument {c!r} outside [-1, 1] beyond tolerance")
    return math.acos(min(1.0, max(-1.0, c)))


def angular_momentum_modulus(Lam, e, iota_deg):
    """``C = sum_j Lambda_j sqrt(1 - e_j^2) cos(iota_j)``."""
    i = np.radians(np.asarray(iota_deg, dtype=float))
    return float(np.sum(np.asarray(Lam) * np.sqrt(1.0 - np.asarray(e) ** 2) * np.cos(i)))


def mutual_inclination(iota1, iota2, dOmega_node, tol=1e-12):
    """Mutual inclination in degrees from the individual inclinations and the
    difference of the nodal longitudes (all degrees)."""
    i1, i2, dO = (math.radians(x) for x in (iota1, iota2, dOmega_node))
    c = math.cos(i1) * math.cos(i2) + math.sin(i1) * math.sin(i2) * math.cos(dO)
    return math.degrees(_checked_arccos(c, tol))


def mutual_inclination_from_momenta(Lam, e, C, tol=1e-12):
    """Mutual inclination in degrees from ``(Lambda_j, e_j)`` and the
    angular-momentum modulus ``C`` (Laplace-frame reduction)."""
    Lam = np.asarray(Lam, dtype=float)
    e = np.asarray(e, dtype=float)
    G1, G2 = Lam * np.sqrt(1.0 - e**2)
    c = (C * C - G1 * G1 - G2 * G2) / (2.0 * G1 * G2)
    return math.degrees(_checked_arccos(c, tol))


def modulus_from_mutual_inclination(Lam, e, imut_deg):
    """Angular-momentum modulus ``C = |G_1 + G_2|`` from the mutual
    inclination: ``C^2 = G1^2 + G2^2 + 2 G1 G2 cos(i_mut)`` with
    ``G_j = Lambda_j sqrt(1 - e_j^2)``.  This is the inverse of
    :func:`mutual_inclination_from_momenta` and lets sky-plane element sets
    (whose individual inclinations are not Laplace-frame angles) feed the
    reduced model consistently."""
    Lam = np.asarray(Lam, dtype=float)
    e = np.asarray(e, dtype=float)
    G1, G2 = Lam * np.sqrt(1.0 - e**2)
    ci = math.cos(math.radians(imut_deg))
    return math.sqrt(G1 * G1 + G2 * G2 + 2.0 * G1 * G2 * ci)


def compute_D2(Lam_star, C):
    """``D2 = [(Lambda1* + Lambda2*)^2 - C^2] / (Lambda1* Lambda2*)``."""
    L1, L2 = (float(x) for x in Lam_star)
    if L1 <= 0 or L2 <= 0:
        raise ValueError("Lambda* must be positive")
    return ((L1 + L2) ** 2 - C * C) / (L1 * L2)


# ---------------------------------------------------------------------------
# order-two averaging over the fast angles
# ---------------------------------------------------------------------------


def _select(f, mask):
    return PoissonSeries(f.sig, f.policy, f.exps[mask], f.coeffs[mask], _truncate=False)


def _trig_truncate(f, K_F):
    return _select(f, f.trig_degrees() <= K_F)


def _k_zero_mask(f):
    n1 = f.sig.n1
    return np.all(f.exps[:, n1 : 2 * n1] == 0, axis=1)


def _L_free_mask(f):
    return np.all(f.exps[:, : f.sig.n1] == 0, axis=1)


def _solve_fast_chi(f, nstar, floor):
    """Generating function with coefficients ``-c_k / (i k.nstar)`` over the
    fast harmonics of ``f`` (which must have no zero-harmonic part)."""
    nstar = np.asarray(nstar, dtype=float)
    n1 = f.sig.n1
    k = f.exps[:, n1 : 2 * n1]
    div = k @ nstar
    small = np.abs(div) < floor
    if np.any(small):
        i = int(np.argmin(np.abs(div)))
        raise SmallDivisorError(
            tuple(int(x) for x in k[i]), float(div[i]), stage="secular-average"
        )
    return PoissonSeries(f.sig, f.policy, f.exps.copy(), -f.coeffs / (1j * div), _truncate=False)


def average_order2(h_kep2, h_pert_grid, nstar, mu, K_F=9, N_S=8, D2=0.0,
                   divisor_floor=None, parity_tol=1e-9):
    """Secular Hamiltonian at order two in the planetary masses.

    Parameters
    ----------
    h_kep2 : PoissonSeries
        Quadratic part of the Keplerian Hamiltonian (homogeneous of degree 2
        in the fast actions ``L``).
    h_pert_grid : dict
        Perturbation pieces indexed by ``(s, j1, j2)``: homogeneous of degree
        ``j1`` in ``L``, degree ``j2`` in the secular pair, attached to the
        angular-momentum-deficit power ``D2^s``.  Only ``j1 <= 1`` entries
        contribute to the secular model; higher powers of ``L`` vanish on the
        ``L = 0`` torus and are ignored.
    nstar : array-like
        Mean motions of the Keplerian approximation.
    mu : float
        Mass-ratio parameter multiplying the perturbation.
    K_F, N_S : int
        Fast trigonometric cutoff and total secular degree.
    D2 : float
        Numeric value of the angular-momentum-deficit parameter.

    Returns
    -------
    PoissonSeries
        The secular Hamiltonian on the purely oscillatory signature
        ``(0, n2)``: an even polynomial of total degree <= ``N_S``.

    Notes
    -----
    The generating function removes the ``L``-free fast terms, with
    coefficients ``-c_k / (i k . nstar)``.  The quadratic-Keplerian
    correction enters as ``-1/2 {chi, {h_kep2, chi}}_(L,lam)``: the sign is
    fixed by matching a brute-force second-order averaging (both a
    Lie-series and a mixed-variable generating-function computation agree).
    """
    sig, pol = h_kep2.sig, h_kep2.policy
    nstar = np.asarray(nstar, dtype=float)
    if divisor_floor is None:
        divisor_floor = 1e-10 * max(1.0, float(np.max(np.abs(nstar))))

    zero = PoissonSeries.zero(sig, pol)
    f_free = zero  # mu sum_s D2^s [h_{s;0,j2}]_{K_F}
    f_lin = zero  # mu sum_s D2^s h_{s;1,j2}
    for (s, j1, j2), h in sorted(h_pert_grid.items()):
        if 2 * s + j2 > N_S or j1 > 1:
            continue
        piece = _trig_truncate(h, K_F).scale(mu * D2**s)
        if j1 == 0:
            f_free = f_free + piece
        else:
            f_lin = f_lin + piece

    k0 = _k_zero_mask(f_free)
    f_avg = _select(f_free, k0)
    f_fast = _select(f_free, ~k0)
    out = f_avg
    if not f_fast.is_zero():
        chi = _solve_fast_chi(f_fast, nstar, divisor_floor)
        pq, osc = range(sig.n1), range(sig.n2)
        corr = poisson_bracket(chi, poisson_bracket(h_kep2, chi), pq, []).scale(-0.5)
        corr = corr + poisson_bracket(chi, f_lin, pq, [])
        corr = corr + poisson_bracket(chi, f_free, [], osc).scale(0.5)
        out = out + _select(corr, _k_zero_mask(corr))

    out = _select(out, _L_free_mask(out))
    deg = out.ell_degrees()  # L-free terms: ell = a + b, the secular degree
    out = _select(out, deg <= N_S)

    odd = out.ell_degrees() % 2 == 1
    if np.any(odd):
        worst = float(np.max(np.abs(out.coeffs[odd])))
        scale = max(out.norm(), 1.0)
        if worst > parity_tol * scale:
            raise ValueError(
                f"parity violation: odd-degree secular term of size {worst:.3e}"
            )
        out = _select(out, ~odd)

    # re-home on the purely secular signature (0, n2)
    n1, n2 = sig.n1, sig.n2
    sec_sig = Signature(0, n2)
    sec_pol = TruncationPolicy(ell_max=max(N_S, 2), trig_max=0, K=1,
                               drop_eps=pol.drop_eps)
    exps = out.exps[:, 2 * n1 :]
    return PoissonSeries(sec_sig, sec_pol, exps, out.coeffs.copy())


# ---------------------------------------------------------------------------
# chart cascade
# ---------------------------------------------------------------------------


@dataclass
class SecularChart:
    """Record of the coordinate cascade from the Poincare secular pair down
    to the centered chart ``(p, q, x, y)``.

    The stages are: ``poincare`` (xi, eta) -> ``action-angle`` (J_j, psi_j)
    -> ``resonant`` (I, theta) with ``theta1 = psi1 - psi2``, ``theta2 =
    psi2``, ``I1 = J1``, ``I2 = J1 + J2`` -> ``cartesian`` (x_j, y_j) ->
    ``centered``: translation by ``(I*, x1*)`` and the quarter-power
    rescaling that balances the transverse quadratic part.
    """

    I_star: float
    x1_star: float
    a: float
    b: float
    Omega0: float
    stages: tuple = (
        "poincare", "action-angle", "resonant", "cartesian", "centered",
    )

    @property
    def scale_x(self):
        return (self.a / self.b) ** 0.25

    def centered_from_poincare(self, xi, eta):
        """Map ``(xi, eta)`` to the centered chart ``(p, q, x, y)``."""
        x1, y1, x2, y2 = resonant_from_poincare(xi, eta)
        p = 0.5 * (x2 * x2 + y2 * y2) - self.I_star
        q = math.atan2(y2, x2)
        return p, q, self.scale_x * (x1 - self.x1_star), y1 / self.scale_x

    def poincare_from_centered(self, p, q, x, y):
        """Inverse of :meth:`centered_from_poincare`."""
        x1 = x / self.scale_x + self.x1_star
        y1 = y * self.scale_x
        I2 = p + self.I_star
        r2 = math.sqrt(2.0 * I2)
        return poincare_from_resonant(x1, y1, r2 * math.cos(q), r2 * math.sin(q))


def resonant_from_poincare(xi, eta):
    """Poincare pair -> resonant Cartesian chart ``(x1, y1, x2, y2)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    J = 0.5 * (xi**2 + eta**2)
    psi = np.arctan2(eta, xi)
    th1, th2 = psi[0] - psi[1], psi[1]
    I1, I2 = J[0], J[0] + J[1]
    r1, r2 = math.sqrt(2.0 * I1), math.sqrt(2.0 * I2)
    return (r1 * math.cos(th1), r1 * math.sin(th1),
            r2 * math.cos(th2), r2 * math.sin(th2))


def poincare_from_resonant(x1, y1, x2, y2):
    """Inverse of :func:`resonant_from_poincare`."""
    I1 = 0.5 * (x1 * x1 + y1 * y1)
    I2 = 0.5 * (x2 * x2 + y2 * y2)
    J2 = I2 - I1
    if J2 < -1e-12 * max(I2, 1.0):
        raise ValueError("resonant state has I2 < I1: not in chart range")
    th1, th2 = math.atan2(y1, x1), math.atan2(y2, x2)
    psi1, psi2 = th1 + th2, th2
    r1, r2 = math.sqrt(2.0 * I1), math.sqrt(2.0 * max(J2, 0.0))
    xi = np.array([r1 * math.cos(psi1), r2 * math.cos(psi2)])
    eta = np.array([r1 * math.sin(psi1), r2 * math.sin(psi2)])
    return xi, eta


# -- sparse polynomial helpers on keys (m_p, k, e_X, e_Y) -------------------


def _pmul(A, B, ell_max, trig_max):
    out = {}
    for (m1, k1, x1, y1), c1 in A.items():
        for (m2, k2, x2, y2), c2 in B.items():
            key = (m1 + m2, k1 + k2, x1 + x2, y1 + y2)
            if 2 * key[0] + key[2] + key[3] > ell_max or abs(key[1]) > trig_max:
                continue
            out[key] = out.get(key, 0.0) + c1 * c2
    return out


def _ppow(A, n, ell_max, trig_max):
    out = {(0, 0, 0, 0): 1.0}
    for _ in range(n):
        out = _pmul(out, A, ell_max, trig_max)
    return out


def chart_cascade(H_sec, I_star, x1_star, ell_max=16, trig_max=40, K=2,
                  drop_eps=1e-300, mixed_tol=1e-6):
    """Express the secular Hamiltonian in the centered chart.

    Applies, in order: action-angle, the resonant combination, Cartesian
    coordinates, the translation by ``(I*, x1*)`` and the quarter-power
    rescaling; the output is a Poisson series on the signature ``(1, 1)``
    (one action-angle pair ``(p, q)``, one oscillator) expanded to
    square-root-action degree ``ell_max``.

    Returns ``(H0, chart)`` with ``chart`` a :class:`SecularChart`.

    Raises
    ------
    ValueError
        If the transverse quadratic coefficients satisfy ``a * b <= 0`` (the
        centering point is not elliptic: re-center with a better periodic
        point) or if a mixed ``x y`` quadratic term survives above
        ``mixed_tol`` relative size.
    """
    if H_sec.sig.n1 != 0 or H_sec.sig.n2 != 2:
        raise ValueError("H_sec must live on the secular signature (0, 2)")
    c0 = 2.0 * I_star - x1_star**2
    if c0 <= 0:
        raise ValueError("2 I* <= x1*^2: centering point outside chart range")

    # xi_1 + i eta_1 = (x1* + X/sx + i sx Y) e^{iq}; the rescale is folded in
    # afterwards, so work with the raw pair (Xbar, Ybar) first.
    z1 = {(0, 1, 1, 0): 1 / _SQRT2, (0, 1, 0, 1): 1j / _SQRT2,
          (0, 1, 0, 0): x1_star / _SQRT2}
    zb1 = {(0, -1, 1, 0): 1 / _SQRT2, (0, -1, 0, 1): -1j / _SQRT2,
           (0, -1, 0, 0): x1_star / _SQRT2}
    # W^2 = c0 + u with u = 2p - 2 x1* Xbar - Xbar^2 - Ybar^2
    u = {(1, 0, 0, 0): 2.0, (0, 0, 1, 0): -2.0 * x1_star,
         (0, 0, 2, 0): -1.0, (0, 0, 0, 2): -1.0}

    u_pow = [{(0, 0, 0, 0): 1.0}]
    while len(u_pow) <= ell_max:
        u_pow.append(_pmul(u_pow[-1], u, ell_max, trig_max))

    w_cache = {}

    def w_power(sigma):
        # W^sigma = c0^{sigma/2} sum_j binom(sigma/2, j) (u/c0)^j
        if sigma not in w_cache:
            out = {}
            for j in range(ell_max + 1):
                coef = binom(sigma / 2.0, j) * c0 ** (sigma / 2.0 - j)
                if coef == 0.0:
                    break
                for key, c in u_pow[j].items():
                    out[key] = out.get(key, 0.0) + coef * c
            w_cache[sigma] = out
        return w_cache[sigma]

    pow_cache = {}

    def cached_pow(tag, base, n):
        if (tag, n) not in pow_cache:
            pow_cache[(tag, n)] = _ppow(base, n, ell_max, trig_max)
        return pow_cache[(tag, n)]

    total = {}
    for key, c in H_sec.items():
        a1, a2 = key.a
        b1, b2 = key.b
        term = _pmul(cached_pow("z1", z1, a1), cached_pow("zb1", zb1, b1),
                     ell_max, trig_max)
        sigma = a2 + b2
        if sigma:
            term = _pmul(term, w_power(sigma), ell_max, trig_max)
        shift = a2 - b2
        scale = c * (1 / _SQRT2) ** sigma
        for (mp, k, ex, ey), tc in term.items():
            kk = k + shift
            if abs(kk) > trig_max:
                continue
            nk = (mp, kk, ex, ey)
            total[nk] = total.get(nk, 0.0) + scale * tc

    aq = total.get((0, 0, 2, 0), 0.0)
    bq = total.get((0, 0, 0, 2), 0.0)
    cmix = total.get((0, 0, 1, 1), 0.0)
    aq, bq = complex(aq).real, complex(bq).real
    if aq * bq <= 0:
        raise ValueError(
            f"transverse quadratic part ({aq:.3e}, {bq:.3e}) is not elliptic: "
            "re-center on a better periodic point"
        )
    if abs(cmix) > mixed_tol * max(abs(aq), abs(bq)):
        raise ValueError(
            f"mixed transverse quadratic term {abs(cmix):.3e} above tolerance"
        )
    total.pop((0, 0, 1, 1), None)
    Omega0 = 2.0 * math.copysign(math.sqrt(aq * bq), aq)
    chart = SecularChart(I_star=float(I_star), x1_star=float(x1_star),
                         a=aq, b=bq, Omega0=Omega0)

    # rescale Xbar = (b/a)^{1/4} X, Ybar = (a/b)^{1/4} Y, then go to z/zbar
    ratio = bq / aq
    xy_cache = {}

    def xy_to_z(ex, ey):
        # X^ex Y^ey as dict {(az, bz): coeff}
        if (ex, ey) not in xy_cache:
            xs = {}
            for i in range(ex + 1):
                xs[(i, ex - i)] = binom(ex, i) * (1 / _SQRT2) ** ex
            ys = {}
            for j in range(ey + 1):
                ys[(j, ey - j)] = (
                    binom(ey, j) * (-1) ** (ey - j) * (-1j / _SQRT2) ** ey
                )
            conv = {}
            for (i1, j1), c1 in xs.items():
                for (i2, j2), c2 in ys.items():
                    kk = (i1 + i2, j1 + j2)
                    conv[kk] = conv.get(kk, 0.0) + c1 * c2
            xy_cache[(ex, ey)] = conv
        return xy_cache[(ex, ey)]

    terms = []
    for (mp, k, ex, ey), c in total.items():
        c = c * ratio ** (ex / 4.0) * ratio ** (-ey / 4.0)
        for (az, bz), w in xy_to_z(ex, ey).items():
            terms.append(((mp,), (k,), (az,), (bz,), c * w))
    pol = TruncationPolicy(ell_max=ell_max, trig_max=trig_max, K=K,
                           drop_eps=drop_eps)
    H0 = PoissonSeries.from_terms(Signature(1, 1), pol, terms)
    return H0, chart


# ---------------------------------------------------------------------------
# periodic-orbit centering and energy matching
# ---------------------------------------------------------------------------


def _section_x2(H_sec, x1, energy, x2_hint):
    """Solve ``H_sec(x1, xi2, 0, 0) = energy`` for ``xi2 > 0`` and return the
    resonant ``x2 = sqrt(x1^2 + xi2^2)``."""

    def g(v):
        return H_sec.evaluate_complex(z=np.array(
            [x1 / _SQRT2, v / _SQRT2])).real - energy

    hint = math.sqrt(max(x2_hint**2 - x1**2, 0.0)) or 1e-3
    lo, hi = hint, hint
    glo = ghi = g(hint)
    for _ in range(80):
        if glo == 0.0:
            return math.sqrt(x1**2 + lo**2)
        lo *= 0.7
        glo = g(lo)
        if glo * ghi < 0:
            break
        hi *= 1.3
        ghi = g(hi)
        if glo * ghi < 0:
            lo, glo = hint, g(hint)
            if glo * ghi >= 0:
                lo = hi / 1.3
            break
    else:
        raise ArithmeticError("energy re-solve: no positive root bracketed")
    root = brentq(g, lo, hi, xtol=1e-15, rtol=8.9e-16)
    return math.sqrt(x1**2 + root**2)


def find_periodic_section_point(H_sec, x_init, energy=None, tol=1e-9,
                                max_iter=40, n_crossings=16, dt=None,
                                max_steps=2_000_000):
    """Locate the fixed point of the section return map of the secular flow.

    The section is ``y2 = 0, x2 > 0`` in the resonant Cartesian chart, which
    coincides with ``eta2 = 0, xi2 > 0`` in the Poincare pair.  Starting from
    ``x_init = (x1, x2)`` (with ``y1 = y2 = 0``), each pass integrates the
    flow, collects the extreme section abscissas ``x1_-`` and ``x1_+``, moves
    to their midpoint, and re-solves ``x2 > 0`` on the energy level; it stops
    when the extreme spread drops below ``tol``.

    Returns ``(x1_star, x2_star, info)`` where ``info`` carries the spread
    history and the energy.
    """
    x1, x2 = (float(v) for v in x_init)
    sig = H_sec.sig
    if sig.n1 != 0 or sig.n2 != 2:
        raise ValueError("H_sec must live on the secular signature (0, 2)")
    xi0, eta0 = poincare_from_resonant(x1, 0.0, x2, 0.0)
    if energy is None:
        energy = H_sec.evaluate_complex(z=(xi0 + 1j * eta0) / _SQRT2).real
    if dt is None:
        # timescale from the quadratic part: J-linear coefficients
        quad = [abs(H_sec.coefficient((), (), a=tuple(r), b=tuple(r)))
                for r in np.eye(2, dtype=int)]
        wmax = max(max(quad), 1e-8)
        dt = 2.0 * math.pi / (800.0 * wmax)
    spec = SectionSpec(coordinate=3, gate_index=1, gate_sign=1)

    spreads = []
    for _ in range(max_iter):
        xi, eta = poincare_from_resonant(x1, 0.0, x2, 0.0)
        start = PhasePoint(np.zeros(0), np.zeros(0), (xi**2 + eta**2) / 2,
                           np.arctan2(eta, xi))
        pts, _, ok = poincare_sections(
            H_sec, start, spec, n_crossings, dt, max_steps=max_steps
        )
        if not ok or len(pts) < 2:
            raise ArithmeticError(
                "section search exhausted its integration budget"
            )
        x1_vals = pts[:, 0]  # on the section x1 = xi1
        lo, hi = float(np.min(x1_vals)), float(np.max(x1_vals))
        spread = hi - lo
        spreads.append(spread)
        x1_new = 0.5 * (lo + hi)
        x2 = _section_x2(H_sec, x1_new, energy, x2)
        x1 = x1_new
        if spread < tol:
            return x1, x2, {"spreads": spreads, "energy": energy}
    raise ArithmeticError(
        f"fixed-point search did not contract below {tol:g} in "
        f"{max_iter} passes (last spread {spreads[-1]:.3e})"
    )


def refine_Istar(energy_fn, I0, E_target, tol=1e-10, max_iter=12,
                 fd_step=1e-7, deriv_floor=1e-12):
    """Newton iteration on ``I*`` so that the normal-form energy matches.

    ``energy_fn(I*)`` must re-run the chart construction and the elliptic
    normalization, returning the normal-form energy; the derivative is a
    one-sided finite difference.  Returns ``(I_star, rows)`` with one
    diagnostic row per iteration.
    """
    I = float(I0)
    rows = []
    for it in range(max_iter + 1):
        err = energy_fn(I) - E_target
        rows.append({"iter": it, "I_star": I, "energy_error": err})
        if abs(err) < tol:
            return I, rows
        if it == max_iter:
            break
        h = fd_step * max(abs(I), 1.0)
        deriv = (energy_fn(I + h) - E_target - err) / h
        if abs(deriv) < deriv_floor:
            raise ArithmeticError("energy derivative below floor")
        I = I - err / deriv
    raise ArithmeticError(
        f"energy matching did not reach {tol:g} in {max_iter} iterations"
    )


# ---------------------------------------------------------------------------
# seeding the Kolmogorov construction
# ---------------------------------------------------------------------------


def seed_kam(state, J_star, ell_max=16, drop_eps=None):
    """Translate a normalized elliptic state into a Kolmogorov starting point.

    Sets ``p2 = J - J*`` and ``p1 = p - p*`` with ``p* = -(Omega/omega) J*``,
    renames the angles ``(q, phi) -> (q1, q2)``, and re-expands the
    square-root-action powers ``J^{s/2} = (J* + p2)^{s/2}`` binomially up to
    action degree ``ell_max / 2``.  The linear parts contribute ``omega p* +
    Omega J* = 0`` to the energy by construction.  ``drop_eps`` overrides the
    drop threshold of the seeded policy (the binomial re-expansion spreads
    coefficients over many orders of magnitude, so a higher threshold keeps
    the seeded series manageable).
    """
    sig = state.grid.sig
    if sig.n1 != 1 or sig.n2 != 1:
        raise ValueError("seed_kam expects a single-oscillator elliptic state")
    omega = float(state.omega[0])
    Omega = float(state.Omega[0])
    if omega == 0.0:
        raise ZeroDivisionError("omega = 0: no rotational frame to seed from")
    J_star = float(J_star)
    if J_star < 0:
        raise ValueError("J* must be non-negative")
    p_star = -(Omega / omega) * J_star

    old_pol = state.grid.policy
    pol = TruncationPolicy(
        ell_max=ell_max, trig_max=old_pol.trig_max, K=old_pol.K,
        drop_eps=old_pol.drop_eps if drop_eps is None else drop_eps,
    )
    new_sig = Signature(2, 0)
    terms = []
    for (_, _), cell in state.grid.items():
        for key, c in cell.items():
            m1 = key.m[0]
            k1 = key.k[0]
            a, b = key.a[0], key.b[0]
            sigma = a + b
            k2 = a - b
            if J_star == 0.0:
                if sigma % 2:
                    raise ValueError(
                        "J* = 0 with a half-integer power of J present: "
                        "the translated Hamiltonian is not polynomial"
                    )
                terms.append(((m1, sigma // 2), (k1, k2), c))
                continue
            for t in range(ell_max // 2 - m1 + 1):
                w = binom(sigma / 2.0, t) * J_star ** (sigma / 2.0 - t)
                if w == 0.0:
                    break
                terms.append(((m1, t), (k1, k2), c * w))

    H = PoissonSeries.constant(new_sig, pol, state.E)
    H = H + PoissonSeries.action_linear(new_sig, pol, [omega, Omega])
    H = H + PoissonSeries.from_terms(
        new_sig, pol, [(m, k, (), (), c) for m, k, c in terms]
    )
    seeded = build_state(H)
    return seeded, p_star
