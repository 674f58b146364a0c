import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import cos, exp, fsum, mp, mpf, pi, quad, sqrt

from dgdp import hp


class TestPrecision:
    def test_default(self):
        assert hp.precision() == 80

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv(hp.PRECISION_ENV_VAR, "60")
        assert hp.configure_precision() == 60
        assert mp.dps == 60

    def test_rejects_tiny(self):
        with pytest.raises(ValueError):
            hp.configure_precision(5)


class TestThetaRatio:
    def test_at_zero_is_one(self):
        q = exp(-2 * pi**2 * 5)
        assert hp.theta3_ratio(0, q) == 1

    def test_domain_error(self):
        with pytest.raises(ValueError):
            hp.theta3_ratio(1, mpf("1.5"))
        with pytest.raises(ValueError):
            hp.theta3_ratio(1, mpf(1))

    def test_against_lattice_sum_oracle(self):
        # Poisson summation: ratio(x, e^{-2 pi^2 s2}) equals
        # e^{x^2/(2 pi^2 s2)} * sum_u e^{-u^2/(2 s2)} cos(2 pi u c) / sum_u e^{-u^2/(2 s2)}
        # with c = x/(2 pi^2 s2); the right side summed directly over |u| <= 200.
        s2 = mpf(5)
        x = mpf("0.1")
        q = exp(-2 * pi**2 * s2)
        c = x / (2 * pi**2 * s2)
        num = fsum(
            exp(-mpf(u) ** 2 / (2 * s2)) * cos(2 * pi * u * c) for u in range(-200, 201)
        )
        den = fsum(exp(-mpf(u) ** 2 / (2 * s2)) for u in range(-200, 201))
        oracle = exp(x**2 / (2 * pi**2 * s2)) * num / den
        assert abs(hp.theta3_ratio(x, q) - oracle) <= mpf("1e-60")

    def test_reports_truncation_index(self):
        q = exp(-2 * pi**2 * 5)
        value, k = hp.theta3_ratio(mpf(2), q, with_index=True)
        assert value >= 1
        assert 1 <= k < hp.THETA_MAX_TERMS

    def test_monotone_on_grid(self):
        q = exp(-2 * pi**2 * mpf("4.25"))
        values = [hp.theta3_ratio(mpf(x) / 4, q) for x in range(0, 40)]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert all(v >= 1 for v in values)

    @given(
        x=st.floats(min_value=0.01, max_value=3.0),
        dx=st.floats(min_value=0.01, max_value=1.0),
        s2=st.floats(min_value=0.5, max_value=6.0),
    )
    @settings(deadline=None, max_examples=25)
    def test_strictly_increasing(self, x, dx, s2):
        q = exp(-2 * pi**2 * mpf(s2))
        assert hp.theta3_ratio(mpf(x) + mpf(dx), q) > hp.theta3_ratio(mpf(x), q)

    def test_pure(self):
        q = exp(-2 * pi**2 * 5)
        a = hp.theta3_ratio(mpf("1.25"), q)
        b = hp.theta3_ratio(mpf("1.25"), q)
        assert a == b


class TestGaussianTailUpper:
    def test_direct_value(self):
        assert hp.gaussian_tail_upper(20) == exp(mpf(-200)) / 20

    def test_domain(self):
        with pytest.raises(ValueError):
            hp.gaussian_tail_upper(0)
        with pytest.raises(ValueError):
            hp.gaussian_tail_upper(-1)

    def test_monotone(self):
        values = [hp.gaussian_tail_upper(mpf(x)) for x in range(1, 30)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_bounds_numeric_integral(self):
        # adaptive quadrature oracle for int_3^inf e^{-s^2/2} ds
        integral = quad(lambda s: exp(-s * s / 2), [3, mp.inf])
        bound = hp.gaussian_tail_upper(3)
        assert integral <= bound <= mpf("1.2") * integral


class TestBoole:
    def test_constant_is_exact(self):
        spec = hp.BooleQuadratureSpec(0, 1, 9)
        value, err = hp.boole_integrate(lambda t: mpf(1), spec, 0)
        assert value == 1
        assert err == 0

    def test_cosine_within_error(self):
        spec = hp.BooleQuadratureSpec(0, pi / 2, 401)
        value, err = hp.boole_integrate(cos, spec, 1)  # |cos^(6)| <= 1
        assert abs(value - 1) <= err

    def test_halving_h_converges(self):
        # halving h changes the result by less than the (coarse) error bound
        f = lambda t: exp(-t * t / 2)
        coarse = hp.BooleQuadratureSpec(0, 2, 41)
        fine = hp.BooleQuadratureSpec(0, 2, 81)
        m6 = 15  # |f^(6)| <= 15 on the real line for the Gaussian kernel
        v1, e1 = hp.boole_integrate(f, coarse, m6)
        v2, e2 = hp.boole_integrate(f, fine, m6)
        assert abs(v1 - v2) <= e1
        assert e2 <= e1 / 2**5

    def test_census_scale_error_constant(self):
        spec = hp.BooleQuadratureSpec(0, mpf(1) / 100, 10**7 + 1)
        assert spec.h == mpf(1) / (100 * 10**7)
        err = hp.boole_error_bound(spec, mpf("1.2e35"))
        assert err < mpf("2.54e-24")

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            hp.BooleQuadratureSpec(0, 1, 10)  # (N-1) % 4 != 0
        with pytest.raises(ValueError):
            hp.BooleQuadratureSpec(0, 1, 4)
        with pytest.raises(ValueError):
            hp.BooleQuadratureSpec(1, 1, 9)

    def test_deterministic(self):
        spec = hp.BooleQuadratureSpec(0, 1, 101)
        f = lambda t: exp(-t) * cos(3 * t)
        assert hp.boole_integrate(f, spec, 100) == hp.boole_integrate(f, spec, 100)


class TestDirichletCosSum:
    @pytest.mark.parametrize("m_lo,m_hi", [(7, 43), (-5, 12), (0, 0), (3, 3)])
    def test_matches_direct_sum(self, m_lo, m_hi):
        for tv in ("0.3", "1.1", "2.7", "0.001"):
            t = mpf(tv)
            direct = fsum(cos(m * t) for m in range(m_lo, m_hi + 1))
            assert abs(hp.dirichlet_cos_sum(m_lo, m_hi, t) - direct) < mpf("1e-70")

    def test_zero_limit(self):
        assert hp.dirichlet_cos_sum(4, 9, 0) == 6

    def test_empty_range(self):
        assert hp.dirichlet_cos_sum(5, 4, mpf("0.3")) == 0


class TestClamp:
    @given(st.floats(min_value=-2, max_value=3, allow_nan=False))
    @settings(deadline=None, max_examples=50)
    def test_in_unit_interval(self, x):
        assert 0 <= hp.clamp_probability(mpf(x)) <= 1

    def test_passthrough(self):
        assert hp.clamp_probability(mpf("0.25")) == mpf("0.25")
        assert hp.clamp_probability(mpf("-1e-79")) == 0
        assert hp.clamp_probability(mpf("1.00001")) == 1
