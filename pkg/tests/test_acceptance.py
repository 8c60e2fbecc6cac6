"""Acceptance suite: the package's headline guarantees in one place.

Each test pins an end-to-end property with an explicit tolerance and, where
relevant, a wall-clock budget: exact annihilation and geometric decay of the
two normal-form constructions, convergence of semi-analytic orbits to the
direct integration, the algebraic integrity of the series kernel, and the
celestial-mechanics entry points (element conversions, averaging,
diagonalization) against independent oracles.
"""

import math
import time

import numpy as np
import pytest

from hamnorm.benchmarks import (
    GOLDEN,
    elliptic_benchmark,
    hd4732_like_elements,
    hd4732_like_hsec,
    kolmogorov_benchmark,
    secular_oracle_toy,
    secular_toy_grid,
)
from hamnorm.elliptic import (
    MelnikovParams,
    build_elliptic_state,
    diagonalize,
    elliptic_step,
    normalize_elliptic,
)
from hamnorm.flows import (
    PhasePoint,
    orbit_discrepancy,
    rk4_integrate,
    semi_analytic_orbit,
)
from hamnorm.kolmogorov import (
    DiophantineParams,
    build_state,
    kolmogorov_step,
    normalize,
    torus_map,
)
from hamnorm.secular import (
    average_order2,
    chart_cascade,
    elements_to_poincare,
    mutual_inclination,
    poincare_to_elements,
    seed_kam,
)
from hamnorm.series import (
    PoissonSeries,
    Signature,
    TruncationPolicy,
    classify,
    mul,
    norm,
    poisson_bracket,
)
from test_secular import brute_force_average
from test_series import random_real_series

DIO = DiophantineParams()
MEL = MelnikovParams()


def max_coeff(f):
    return float(np.max(np.abs(f.coeffs))) if len(f.coeffs) else 0.0


def low_band_norm(grid, ell_cut, r):
    """Total norm of the cells that step r must have removed (grid-ell
    counts sqrt-action degree, so action degree 1 is grid-ell 2)."""
    total = 0.0
    for (ell, s) in list(grid.cells):
        if ell <= ell_cut and s <= r:
            total += norm(grid.cell(ell, s))
    return total


class TestKolmogorovAnnihilation:
    def test_low_degree_cells_vanish_through_r10(self):
        t0 = time.monotonic()
        H, _ = kolmogorov_benchmark(eps=1e-3, R=10)
        scale = norm(H)
        state = build_state(H)
        for r in range(1, 11):
            kolmogorov_step(state, DIO)
            assert low_band_norm(state.grid, 2, r) < 1e-14 * scale
        assert time.monotonic() - t0 < 60.0


class TestEllipticAnnihilation:
    def test_low_degree_cells_and_diagonality_through_r8(self):
        t0 = time.monotonic()
        H, _ = elliptic_benchmark(eps=1e-3, R=8)
        scale = norm(H)
        state = build_elliptic_state(H)
        for r in range(1, 9):
            row = elliptic_step(state, MEL)
            assert low_band_norm(state.grid, 2, r) < 1e-14 * scale
            # the oscillator quadratic is kept diagonal (Omega . J) at
            # every step; the residual is the off-diagonal leftover
            assert row["diag_residual"] < 1e-12 * scale
        assert time.monotonic() - t0 < 120.0


def fitted_ratio(norms, r_lo, r_hi):
    """Geometric ratio fitted on log norms over steps r_lo..r_hi."""
    rs = np.arange(r_lo, r_hi + 1)
    vals = np.array([norms[r - 1] for r in rs])
    assert np.all(vals > 0)
    slope = np.polyfit(rs, np.log(vals), 1)[0]
    return math.exp(slope)


class TestGeometricDecay:
    def test_kolmogorov_chi2(self):
        H, _ = kolmogorov_benchmark(eps=1e-3, R=10)
        _, history = normalize(build_state(H), 10, DIO)
        norms = [row["norm_chi2"] for row in history]
        assert fitted_ratio(norms, 3, 10) < 0.9

    def test_elliptic_stage_norms(self):
        H, _ = elliptic_benchmark(eps=1e-3, R=10)
        _, history = normalize_elliptic(build_elliptic_state(H), 10, MEL)
        norms = [
            row["norm_chi0"] + row["norm_chi1"] + row["norm_X2"]
            + row["norm_Y2"]
            for row in history
        ]
        assert fitted_ratio(norms, 3, 10) < 0.9


class TestSemiAnalyticConvergence:
    def test_discrepancy_drops_tenfold_with_order(self):
        t0 = time.monotonic()
        H, _ = kolmogorov_benchmark(eps=1e-3, R=10)
        Q0 = np.array([0.3, 1.1])
        n_samp, m = 200, 40
        sups = []
        for R_I in (2, 4, 6):
            state = build_state(H)
            state, _ = normalize(state, R_I, DIO)
            psi = torus_map(state.log)
            T = 10 * 2 * math.pi / state.omega[0]
            t_grid = np.linspace(0.0, T, n_samp + 1)
            orbit = semi_analytic_orbit(psi, state.omega, Q0, t_grid)
            x0 = PhasePoint.from_vec(H.sig, orbit[0])
            traj = rk4_integrate(H, x0, T / (m * n_samp), m * n_samp,
                                 record_every=m)
            sup, _ = orbit_discrepancy(orbit, traj.states, H.sig)
            sups.append(sup)
        assert sups[1] < 0.1 * sups[0]
        assert sups[2] < 0.1 * sups[1]
        assert time.monotonic() - t0 < 300.0


class TestBracketAlgebra:
    SIG = Signature(2, 1)
    # order/trig headroom so that no identity is distorted by truncation
    POL = TruncationPolicy(ell_max=16, trig_max=40, K=2)

    def corpus(self, n):
        rng = np.random.default_rng(2024)
        for _ in range(n):
            yield (
                random_real_series(rng, self.SIG, self.POL, n_terms=3),
                random_real_series(rng, self.SIG, self.POL, n_terms=3),
                random_real_series(rng, self.SIG, self.POL, n_terms=3),
            )

    def test_identities_on_1000_triples(self):
        for f, g, h in self.corpus(1000):
            fg = poisson_bracket(f, g)
            gh = poisson_bracket(g, h)
            fh = poisson_bracket(f, h)
            assert max_coeff(fg + poisson_bracket(g, f)) < 1e-10
            leib = (
                poisson_bracket(mul(f, g), h) - mul(f, gh) - mul(g, fh)
            )
            assert max_coeff(leib) < 1e-10
            jac = (
                poisson_bracket(f, gh)
                + poisson_bracket(g, poisson_bracket(h, f))
                + poisson_bracket(h, fg)
            )
            assert max_coeff(jac) < 1e-10

    def test_class_closure_on_1000_pairs(self):
        # {cell (ell,s), cell (ell',s')} lands in (ell+ell'-2, s'' <= s+s')
        K = self.POL.K
        for f, g, _ in self.corpus(1000):
            for (ell1, s1), c1 in classify(f).items():
                for (ell2, s2), c2 in classify(g).items():
                    br = poisson_bracket(c1, c2)
                    if br.is_zero():
                        continue
                    assert np.all(br.ell_degrees() == ell1 + ell2 - 2)
                    assert np.all(br.trig_degrees() <= (s1 + s2) * K)


class TestOrbitalElements:
    def test_mutual_inclination_two_degrees(self):
        assert abs(mutual_inclination(89.0, 91.0, 0.0) - 2.0) < 1e-9

    def test_fixture_roundtrip(self):
        el = hd4732_like_elements()
        Lam, lam, xi, eta = elements_to_poincare(el)
        a, e, M, om = poincare_to_elements(el.m0, el.m, el.G, Lam, lam,
                                           xi, eta)
        assert np.allclose(a, el.a, rtol=1e-10)
        assert np.allclose(e, el.e, rtol=1e-10)
        assert np.allclose(M % 360.0, el.M % 360.0, atol=1e-10)
        assert np.allclose(om % 360.0, el.omega_peri % 360.0, atol=1e-10)


class TestAveragingOracle:
    def test_single_harmonic_toy(self):
        h_kep2, grid, nstar, mu = secular_oracle_toy(c_kep=0.7, eps=0.3)
        out = average_order2(h_kep2, grid, nstar, mu)
        oracle = brute_force_average(h_kep2, grid, nstar, mu, 0.0)
        assert norm(out - oracle) <= 1e-10 * max(norm(oracle), 1e-300)

    def test_parity_exact(self):
        h_kep2, grid, nstar, mu, D2 = secular_toy_grid()
        out = average_order2(h_kep2, grid, nstar, mu, D2=D2)
        assert np.all(out.ell_degrees() % 2 == 0)


class TestDiagonalizationOracle:
    def test_hundred_random_cases(self):
        sig = Signature(1, 2)
        pol = TruncationPolicy(ell_max=4, trig_max=8, K=2)
        rng = np.random.default_rng(99)
        for _ in range(100):
            W = np.sort(rng.uniform(0.1, 1.0, 2))[::-1]
            d = rng.uniform(-1e-2, 1e-2)
            e1 = rng.uniform(-1e-2, 1e-2)
            e2 = rng.uniform(-1e-2, 1e-2)
            f = PoissonSeries.from_terms(
                sig, pol,
                [
                    ((0,), (0,), (1, 0), (0, 1), d / 2),
                    ((0,), (0,), (0, 1), (1, 0), d / 2),
                    ((0,), (0,), (1, 0), (1, 0), e1),
                    ((0,), (0,), (0, 1), (0, 1), e2),
                ],
            )
            Om, _, _ = diagonalize(W, f, MEL)
            M = np.array([[W[0] + e1, d / 2], [d / 2, W[1] + e2]])
            expected = np.sort(np.linalg.eigvalsh(M))[::-1]
            assert np.max(np.abs(np.sort(Om)[::-1] - expected)) < 1e-10


class TestScaleFeasibility:
    # the production-scale run: 19 + 19 steps on the planetary fixture at
    # the full working policies (sqrt-action degree 16 on the elliptic leg,
    # action degree 8 on the torus leg, trig_max 40, K = 2)
    X1_STAR = 0.10605002389513268
    X2_STAR = 0.29998922799478955
    J_STAR = 1e-3
    KAM_DROP = 1e-13

    def test_nineteen_plus_nineteen_steps(self):
        t0 = time.monotonic()
        H_sec, _ = hd4732_like_hsec()
        I_star = (self.X1_STAR**2 + self.X2_STAR**2) / 2.0
        H0, chart = chart_cascade(H_sec, I_star, self.X1_STAR,
                                  ell_max=16, trig_max=40, K=2,
                                  drop_eps=1e-22)
        state = build_elliptic_state(H0)
        scale = norm(state.hamiltonian())
        for r in range(1, 20):
            elliptic_step(state, MEL)
            assert low_band_norm(state.grid, 2, r) < 1e-14 * scale
        seeded, _ = seed_kam(state, self.J_STAR, ell_max=16,
                             drop_eps=self.KAM_DROP)
        kscale = norm(seeded.hamiltonian())
        for r in range(1, 20):
            kolmogorov_step(seeded, DIO)
            assert low_band_norm(seeded.grid, 2, r) < 1e-14 * kscale
        assert time.monotonic() - t0 < 1800.0
