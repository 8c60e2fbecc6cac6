import math

import numpy as np
import pytest

from hamnorm.series import (
    ClassGrid,
    PoissonSeries,
    Signature,
    TruncationPolicy,
    angular_average,
    classify,
    evaluate,
    lie_series,
    mul,
    norm,
    poisson_bracket,
)


def random_real_series(rng, sig, policy, n_terms=6, ell_max=4, trig_max=None,
                       coeff_scale=1.0):
    """Random real series: draws keys with ell <= ell_max and adds the
    conjugate of every term."""
    if trig_max is None:
        trig_max = 2 * policy.K
    terms = []
    for _ in range(n_terms):
        while True:
            m = rng.integers(0, ell_max // 2 + 1, sig.n1)
            a = rng.integers(0, ell_max + 1, sig.n2)
            b = rng.integers(0, ell_max + 1, sig.n2)
            if 2 * m.sum() + a.sum() + b.sum() <= ell_max:
                break
        while True:
            k = rng.integers(-trig_max, trig_max + 1, sig.n1)
            if np.abs(k).sum() <= trig_max:
                break
        c = coeff_scale * (rng.normal() + 1j * rng.normal())
        terms.append((tuple(m), tuple(k), tuple(a), tuple(b), c))
        terms.append(
            (tuple(m), tuple(-k), tuple(b), tuple(a), np.conj(c))
        )
    return PoissonSeries.from_terms(sig, policy, terms)


SIG = Signature(2, 1)
POL = TruncationPolicy(ell_max=12, trig_max=12, K=2)


class TestBasicAlgebra:
    def test_additive_inverse(self):
        p1 = PoissonSeries.action_linear(SIG, POL, [1.0, 0.0])
        assert (p1 + (-p1)).is_zero()

    def test_add_doubles(self):
        c = PoissonSeries.cosine(SIG, POL, (1, 0))
        two = c + c
        assert two.coefficient((0, 0), (1, 0)) == pytest.approx(1.0)

    def test_add_commutative(self):
        rng = np.random.default_rng(0)
        f = random_real_series(rng, SIG, POL)
        g = random_real_series(rng, SIG, POL)
        assert norm((f + g) - (g + f)) == 0.0

    def test_mul_action_square(self):
        p1 = PoissonSeries.action_linear(SIG, POL, [1.0, 0.0])
        sq = mul(p1, p1)
        assert sq.coefficient((2, 0), (0, 0)) == pytest.approx(1.0)
        # dropped when 2|m| exceeds ell_max
        tight = TruncationPolicy(ell_max=2, trig_max=4, K=2)
        p1t = p1.with_policy(tight)
        assert mul(p1t, p1t).is_zero()

    def test_mul_product_to_sum(self):
        c = PoissonSeries.cosine(SIG, POL, (1, 0))
        prod = mul(c, c)
        assert prod.coefficient((0, 0), (0, 0)) == pytest.approx(0.5)
        assert prod.coefficient((0, 0), (2, 0)) == pytest.approx(0.25)
        assert prod.coefficient((0, 0), (-2, 0)) == pytest.approx(0.25)

    def test_z_zbar_is_action(self):
        z = PoissonSeries.from_terms(
            SIG, POL, [((0, 0), (0, 0), (1,), (0,), 1.0)]
        )
        J1 = mul(z, z.conjugate())
        assert J1.coefficient((0, 0), (0, 0), (1,), (1,)) == pytest.approx(1.0)

    def test_signature_mismatch(self):
        f = PoissonSeries.zero(SIG, POL)
        g = PoissonSeries.zero(Signature(1, 0), TruncationPolicy(4, 4))
        with pytest.raises(ValueError):
            f + g


class TestBracket:
    def test_p_cos_sin(self):
        f = PoissonSeries.cosine(SIG, POL, (1, 0), m=(1, 0))
        g = PoissonSeries.sine(SIG, POL, (1, 0))
        br = poisson_bracket(f, g)
        assert br.coefficient((0, 0), (0, 0)) == pytest.approx(-0.5)
        assert br.coefficient((0, 0), (2, 0)) == pytest.approx(-0.25)
        assert br.coefficient((0, 0), (-2, 0)) == pytest.approx(-0.25)

    def test_cartesian_oscillator_pair(self):
        # x = sqrt(2J) cos(phi), y = sqrt(2J) sin(phi): {x, y} = -1 with the
        # {f,g} = f_q g_p - f_p g_q convention used throughout ({z,zbar} = i).
        z = PoissonSeries.from_terms(
            SIG, POL, [((0, 0), (0, 0), (1,), (0,), 1.0)]
        )
        x = (z + z.conjugate()).scale(1 / math.sqrt(2))
        y = (z - z.conjugate()).scale(-1j / math.sqrt(2))
        br = poisson_bracket(x, y)
        assert br.coefficient((0, 0), (0, 0)) == pytest.approx(-1.0)

    def test_antisymmetry_leibniz_jacobi(self):
        rng = np.random.default_rng(42)
        big = TruncationPolicy(ell_max=16, trig_max=40, K=2)
        for _ in range(25):
            f = random_real_series(rng, SIG, big)
            g = random_real_series(rng, SIG, big)
            h = random_real_series(rng, SIG, big)
            anti = poisson_bracket(f, g) + poisson_bracket(g, f)
            assert norm(anti) < 1e-10
            leib = (
                poisson_bracket(mul(f, g), h)
                - mul(f, poisson_bracket(g, h))
                - mul(g, poisson_bracket(f, h))
            )
            assert norm(leib) < 1e-10 * max(1.0, norm(f) * norm(g) * norm(h))
            jac = (
                poisson_bracket(f, poisson_bracket(g, h))
                + poisson_bracket(g, poisson_bracket(h, f))
                + poisson_bracket(h, poisson_bracket(f, g))
            )
            assert norm(jac) < 1e-10 * max(1.0, norm(f) * norm(g) * norm(h))

    def test_class_closure(self):
        # {cell (ell,s), cell (ell',s')} lands in cells (ell+ell'-2, s'' <= s+s')
        rng = np.random.default_rng(7)
        big = TruncationPolicy(ell_max=16, trig_max=40, K=2)
        for _ in range(40):
            f = random_real_series(rng, SIG, big, n_terms=4)
            g = random_real_series(rng, SIG, big, n_terms=4)
            gf = classify(f)
            gg = classify(g)
            for (ell1, s1), c1 in gf.items():
                for (ell2, s2), c2 in gg.items():
                    br = poisson_bracket(c1, c2)
                    if br.is_zero():
                        continue
                    assert np.all(br.ell_degrees() == ell1 + ell2 - 2)
                    assert np.all(
                        br.trig_degrees() <= (s1 + s2) * big.K
                    )

    def test_reality_preserved(self):
        rng = np.random.default_rng(3)
        f = random_real_series(rng, SIG, POL)
        g = random_real_series(rng, SIG, POL)
        assert f.is_real(tol=0.0)
        assert mul(f, g).is_real(tol=1e-12 * norm(f) * norm(g))
        assert poisson_bracket(f, g).is_real(tol=1e-10 * norm(f) * norm(g))


class TestLieSeries:
    def test_zero_generator(self):
        rng = np.random.default_rng(11)
        f = random_real_series(rng, SIG, POL)
        out = lie_series(PoissonSeries.zero(SIG, POL), f)
        assert norm(out - f) == 0.0

    def test_single_bracket_terminates(self):
        chi = PoissonSeries.sine(SIG, POL, (1, 0), 0.3)
        p1 = PoissonSeries.action_linear(SIG, POL, [1.0, 0.0])
        out = lie_series(chi, p1)
        # L_chi p1 = {p1, chi} = -dchi/dq1 = -0.3 cos q1; second iterate zero
        assert out.coefficient((1, 0), (0, 0)) == pytest.approx(1.0)
        assert out.coefficient((0, 0), (1, 0)) == pytest.approx(-0.15)
        assert len(out) == 3

    def test_exchange_theorem_vs_rk4(self):
        # evaluate exp(L_chi) f at a point == f at the time-1 flow of chi
        sig = Signature(2, 0)
        pol = TruncationPolicy(ell_max=8, trig_max=16, K=2)
        chi = PoissonSeries.sine(sig, pol, (1, -1), 1e-3, m=(1, 0)) + \
            PoissonSeries.cosine(sig, pol, (0, 1), 1e-3)
        f = PoissonSeries.cosine(sig, pol, (1, 0), m=(1, 1))
        out = lie_series(chi, f)
        p = np.array([0.3, 0.7])
        q = np.array([0.4, 1.1])

        def field(state):
            pp, qq = state[:2], state[2:]
            dp = np.array(
                [-evaluate(chi.dq(j).scale(-1j), p=pp, q=qq) for j in (0, 1)]
            )
            # dq_j/dt = dchi/dp_j ; dp_j/dt = -dchi/dq_j
            dq = np.array([evaluate(chi.dp(j), p=pp, q=qq) for j in (0, 1)])
            return np.concatenate([dp, dq])

        # NB dchi/dq_j = dq(j) already includes the i k factor; taking the
        # real part via evaluate needs the series itself, so use complex eval:
        def field2(state):
            pp, qq = state[:2], state[2:]
            dp = np.array(
                [-chi.dq(j).evaluate_complex(pp, qq, ()).real for j in (0, 1)]
            )
            dq = np.array(
                [chi.dp(j).evaluate_complex(pp, qq, ()).real for j in (0, 1)]
            )
            return np.concatenate([dp, dq])

        state = np.concatenate([p, q])
        dt = 1e-2
        for _ in range(100):
            k1 = field2(state)
            k2 = field2(state + 0.5 * dt * k1)
            k3 = field2(state + 0.5 * dt * k2)
            k4 = field2(state + dt * k3)
            state = state + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        lhs = evaluate(out, p=p, q=q)
        rhs = evaluate(f, p=state[:2], q=state[2:])
        assert abs(lhs - rhs) < 1e-6


class TestClassifyAverageNormEvaluate:
    def test_classify_examples(self):
        pol = TruncationPolicy(ell_max=8, trig_max=8, K=2)
        f = PoissonSeries.cosine(SIG, pol, (3, 0), m=(1, 0))
        grid = classify(f)
        assert set(grid.cells) == {(2, 2)}
        g = PoissonSeries.cosine(SIG, pol, (0, 0), a=(1,))  # sqrt(J1) cos phi1
        assert set(classify(g).cells) == {(1, 0)}
        sig0 = Signature(2, 0)
        h = mul(
            PoissonSeries.action_linear(sig0, pol, [1.0, 0.0]),
            PoissonSeries.action_linear(sig0, pol, [1.0, 0.0]),
        )
        assert set(classify(h).cells) == {(4, 0)}

    def test_classify_roundtrip(self):
        rng = np.random.default_rng(5)
        f = random_real_series(rng, SIG, POL, n_terms=12)
        grid = classify(f)
        grid.validate(strict=True)
        assert norm(grid.total() - f) == 0.0

    def test_average(self):
        c = PoissonSeries.cosine(SIG, POL, (1, 0))
        assert angular_average(c, "q").is_zero()
        j1 = PoissonSeries.oscillator_linear(SIG, POL, [1.0])
        f = j1 + PoissonSeries.cosine(SIG, POL, (0, 0), a=(1,))
        avg = angular_average(f, "phi")
        assert norm(avg - j1) == 0.0
        rng = np.random.default_rng(9)
        g = random_real_series(rng, SIG, POL)
        assert norm(
            angular_average(angular_average(g)) - angular_average(g)
        ) == 0.0

    def test_norm(self):
        assert norm(PoissonSeries.zero(SIG, POL)) == 0.0
        assert norm(PoissonSeries.cosine(SIG, POL, (1, 0), 3.0)) == pytest.approx(3.0)
        rng = np.random.default_rng(13)
        f = random_real_series(rng, SIG, POL)
        g = random_real_series(rng, SIG, POL)
        assert norm(f + g) <= (norm(f) + norm(g)) * (1 + 1e-12)

    def test_evaluate(self):
        p1 = PoissonSeries.action_linear(SIG, POL, [1.0, 0.0])
        assert evaluate(p1, p=[2.0, 0.3], q=[0, 0], J=[0.0], phi=[0.0]) == 2.0
        c = PoissonSeries.cosine(SIG, POL, (1, 0))
        assert evaluate(
            c, p=[0, 0], q=[np.pi, 0], J=[0.0], phi=[0.0]
        ) == pytest.approx(-1.0)

    def test_evaluate_vs_naive_sum(self):
        rng = np.random.default_rng(17)
        f = random_real_series(rng, SIG, POL, n_terms=10)
        p = rng.normal(size=2)
        q = rng.normal(size=2)
        J = rng.uniform(0.1, 1.0, size=1)
        phi = rng.normal(size=1)
        z = np.sqrt(J) * np.exp(1j * phi)
        naive = 0.0 + 0.0j
        for key, c in sorted(f.items(), key=lambda t: abs(t[1])):
            m, k, a, b = key
            naive += (
                c
                * np.prod(p ** np.array(m))
                * np.exp(1j * np.dot(k, q))
                * np.prod(z ** np.array(a))
                * np.prod(np.conj(z) ** np.array(b))
            )
        val = evaluate(f, p=p, q=q, J=J, phi=phi)
        assert abs(val - naive.real) < 1e-12 * max(1.0, abs(val))

    def test_truncation_policy_validation(self):
        with pytest.raises(ValueError):
            TruncationPolicy(ell_max=1, trig_max=4, K=2)
        with pytest.raises(ValueError):
            TruncationPolicy(ell_max=4, trig_max=5, K=2)
