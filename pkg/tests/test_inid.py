import numpy as np
import pytest
from mpmath import exp, fsum, mp, mpf, pi, sqrt

from dgdp import census, inid, tradeoff
from dgdp.hp import BooleQuadratureSpec, boole_error_bound, boole_integrate
from dgdp.inid import AllocationConfig


@pytest.fixture(scope="module")
def census_config():
    return census.load_preset("census_2022_08_25").config


def single_group_config():
    # one level, sigma^2 = 5, ten folds: rho = 1, fraction 0.274 arbitrary
    return AllocationConfig.from_fractions(
        1, [(mpf("0.274"), 10)], queries_per_level=mpf("2.74")
    )


def two_group_config():
    # gcd of scaled fractions is 1; sigma^2 <= 5 and three folds per group
    return AllocationConfig.from_fractions(
        mpf("0.75"),
        [(mpf("0.401"), 3), (mpf("0.599"), 3)],
        queries_per_level=3,
    )


class TestConfig:
    def test_census_sigmas(self, census_config):
        expected = ["68.49", "5.00", "16.12", "10.46", "5.76", "11.61", "456.62"]
        for group, target in zip(census_config.groups, expected):
            assert abs(group.sigma2 - mpf(target)) < mpf("0.005")

    def test_census_n_eff_exact(self, census_config):
        assert census_config.n_eff == 10

    def test_scaled_fractions(self, census_config):
        assert census_config.scaled_fractions == (20, 274, 85, 131, 238, 118, 3)

    def test_rejects_non_lattice_fraction(self):
        with pytest.raises(ValueError):
            AllocationConfig.from_fractions(1, [(mpf("0.12345"), 10)],
                                            queries_per_level=mpf("1.2345"))

    def test_rejects_inconsistent_total(self):
        with pytest.raises(ValueError):
            AllocationConfig.from_fractions(1, [(mpf("0.2"), 10)], queries_per_level=10)

    def test_rejects_zero_fraction(self):
        with pytest.raises(ValueError):
            AllocationConfig.from_fractions(1, [(mpf(0), 10)], queries_per_level=0)

    def test_scaling_moves_rho(self, census_config):
        scaled = census_config.scaled(mpf("0.9"))
        assert abs(scaled.rho - census_config.rho / mpf("0.9")) < mpf("1e-70")
        for a, b in zip(scaled.groups, census_config.groups):
            assert abs(a.sigma2 - mpf("0.9") * b.sigma2) < mpf("1e-70")


class TestThresholds:
    def test_at_rho(self, census_config):
        t_eps, cap_t = inid.thresholds(census_config, census_config.rho)
        assert t_eps == 0
        assert cap_t == census_config.queries_per_level

    def test_census_arithmetic(self, census_config):
        t_eps, cap_t = inid.thresholds(census_config, mpf("21.97"))
        assert abs(t_eps - 5 * (mpf("21.97") / mpf("3.65") - 1)) < mpf("1e-70")
        assert abs(cap_t - t_eps - 10) < mpf("1e-70")


class TestGroupMeasure:
    def test_total_mass_near_one(self, census_config):
        for measure in census_config.measures():
            assert abs(measure.total_mass() - 1) < mpf("1e-30")

    def test_char_at_zero_is_mass(self, census_config):
        measure = census_config.measures()[1]
        assert abs(measure.char(0, 1) - measure.total_mass()) < mpf("1e-70")

    def test_char_poisson_vs_cosine_series(self):
        # cosine-series route: f(w) = (1 + 2 sum_u cos(u w) e^{-u^2/2s}) / sqrt(2 pi s)
        measure = inid.GroupMeasure(50)
        from mpmath import cos

        for w in ("0.3", "1.2", "2.7"):
            w = mpf(w)
            series = 1 + 2 * fsum(
                cos(u * w) * exp(-mpf(u) ** 2 / 100) for u in range(1, 200)
            )
            series /= sqrt(2 * pi * 50)
            assert abs(measure.char(w, 2) - series) < mpf("1e-60")


class TestTruncationErrors:
    def test_census_product_bound(self, census_config):
        errs = inid.truncation_errors(census_config)
        assert errs.residual_product <= mpf("3.4e-29")
        assert errs.total < mpf("3.6e-29")

    def test_single_group_degenerate(self):
        cfg = single_group_config()
        errs = inid.truncation_errors(cfg)
        from dgdp.iid import residual_bound

        r = residual_bound(10, cfg.groups[0].sigma2).r
        s = cfg.groups[0].lattice_variance
        assert abs(errs.residual_product - 24 * sqrt(s) * r) < mpf("1e-100")
        assert errs.prob_tail == 2 * exp(mpf(-72))
        assert errs.measure_tail == 2 * exp(mpf(-72))


class TestKernelAndIntegrand:
    def test_kernel_count_census(self, census_config):
        t_eps, _ = inid.thresholds(census_config, mpf("21.97"))
        m_lo, m_hi = inid._kernel_range(census_config, t_eps)
        count = m_hi - m_lo + 1
        assert count <= 5 * t_eps * census_config.lattice_scale + 2
        assert count < mpf("1.3e5")

    def test_integrand_at_zero(self, census_config):
        t_eps, _ = inid.thresholds(census_config, mpf("21.97"))
        m_lo, m_hi = inid._kernel_range(census_config, t_eps)
        value = inid.integrand_F(census_config, mpf("21.97"), 0)
        masses = mpf(1)
        for measure in census_config.measures():
            masses *= measure.total_mass()
        expected = (m_hi - m_lo + 1) * masses / pi
        assert abs(value - expected) < mpf("1e-60")

    def test_single_group_full_interval_oracle(self):
        # Boole over [0, pi] recovers the direct lattice-measure sum within
        # the certified quadrature error
        cfg = single_group_config()
        measure = cfg.measures()[0]
        a_l = cfg.scaled_fractions[0]
        m_lo, m_hi = 5 * a_l, 7 * a_l  # lattice points 5, 6, 7
        direct = fsum(measure.weight(x) for x in (5, 6, 7))

        integrand = inid._TailIntegrand(cfg, m_lo, m_hi)
        bounds = inid._moment_bounds(cfg)
        binom = (1, 6, 15, 20, 15, 6, 1)
        m6 = fsum(
            binom[j] * bounds[j] * inid._range_power_sum(6 - j, m_lo, m_hi)
            for j in range(7)
        ) / pi
        quad = BooleQuadratureSpec(0, pi, 80001)
        value, err = boole_integrate(integrand, quad, m6)
        assert err < mpf("1e-4")
        assert abs(value - direct) <= err
        # the certified constant is loose here; the grid is fine enough that
        # the quadrature actually resolves the sum to working precision
        assert abs(value - direct) < mpf("1e-30")


class TestSieve:
    def test_census_certified(self, census_config):
        bound = inid.sieve_domain_bound(census_config, mpf("21.97"))
        assert bound.meets_target
        assert bound.sup_product < mpf("1e-35")
        assert bound.value <= mpf("1.3e-30")

    def test_shift_side_larger_kernel(self, census_config):
        main = inid.sieve_domain_bound(census_config, mpf("21.97"))
        shift = inid.sieve_domain_bound(census_config, mpf("21.97"), shifted=True)
        assert shift.kernel_count > main.kernel_count
        assert shift.value > main.value

    def test_single_group_scan_oracle(self):
        # certified per-interval bound vs a dense 1e6-point scan: the
        # certificate must dominate and stay within 10x at the scan peak
        cfg = single_group_config()
        sup = inid._sieve_sup(cfg, 0.01)
        s = float(cfg.groups[0].lattice_variance)
        a_l = cfg.scaled_fractions[0]
        t = np.linspace(0.01, np.pi, 10**6)
        om = a_l * t
        k = np.rint(om / (2 * np.pi))
        expos = np.stack(
            [-s * (om - 2 * np.pi * (k + dk)) ** 2 / 2 for dk in (-1, 0, 1)]
        )
        peak = expos.max(axis=0)
        scan = (peak + np.log(np.exp(expos - peak).sum(axis=0))).max()
        scan_sup = mpf(float(np.exp(scan)))
        assert scan_sup <= sup <= 10 * scan_sup

    def test_flagged_when_uncertifiable(self):
        # a single wide-lattice group peaks inside [0.01, pi]: the sieve
        # returns its (large) certified bound, flagged
        cfg = single_group_config()
        bound = inid.sieve_domain_bound(cfg, mpf(3))
        assert not bound.meets_target
        assert bound.sup_product > mpf("0.9")


class TestSixthDerivative:
    def test_census_values(self, census_config):
        bound = inid.sixth_derivative_bound(census_config, mpf("21.97"))
        assert bound.value <= mpf("1.2e35")
        assert bound.abs_moment_bounds[1] <= mpf("7.0e3")
        assert bound.abs_moment_bounds[2] <= mpf("7.6e7")

    def test_census_boole_error_scales(self, census_config):
        m6 = inid.sixth_derivative_bound(census_config, mpf("21.97")).value
        paper = boole_error_bound(BooleQuadratureSpec(0, mpf(1) / 100, 10**7 + 1), m6)
        desk = boole_error_bound(inid.default_quadrature(), m6)
        assert paper <= mpf("2.54e-24")
        halved = boole_error_bound(
            BooleQuadratureSpec(0, mpf(1) / 100, 2 * (inid.DEFAULT_BOOLE_POINTS - 1) + 1),
            m6,
        )
        assert desk / halved >= 2**5

    def test_single_group_moments_dominate_direct(self):
        cfg = single_group_config()
        bound = inid.sixth_derivative_bound(cfg, mpf(3))
        measure = cfg.measures()[0]
        a_l = cfg.scaled_fractions[0]
        for p in range(1, 7):
            direct = mpf(a_l) ** p * measure.abs_moment(p)
            assert bound.abs_moment_bounds[p] >= direct * (1 - mpf("1e-40"))


def _two_group_exact_tail(cfg, threshold):
    """Exact convolution tail P[sum_i a_i W_i > threshold] via fold pmfs."""
    scale = cfg.lattice_scale
    supports = []
    for g in cfg.groups:
        offset, weights = tradeoff.convolution_pmf(g.n_folds, g.sigma2)
        a_l = int(mp.nint(g.a * scale))
        supports.append((offset, weights, a_l))
    (o1, w1, l1), (o2, w2, l2) = supports
    cut = threshold * scale
    tail = mpf(0)
    for i, wa in enumerate(w1):
        base = l1 * (i + o1)
        for j, wb in enumerate(w2):
            if base + l2 * (j + o2) > cut:
                tail += wa * wb
    return tail


class TestOverallDelta:
    def test_invariants_small_config(self):
        cfg = two_group_config()
        quad = BooleQuadratureSpec(0, mpf(1) / 100, 4001)
        eps = mpf("1.5")
        res = inid.overall_delta(cfg, eps, quad)
        assert res.delta_upper >= res.delta_two_sided >= 0
        t_eps, cap_t = inid.thresholds(cfg, eps)
        exact = _two_group_exact_tail(cfg, t_eps) - exp(eps) * _two_group_exact_tail(
            cfg, cap_t
        )
        # ledger soundness (the toy ledger is dominated by the honest domain
        # cut, so this also checks the estimate against the exact profile)
        assert abs(res.delta_two_sided - exact) <= res.ledger.total
        assert exact <= res.delta_upper

    def test_rejects_bad_quadrature(self, census_config):
        with pytest.raises(ValueError):
            inid.overall_delta(
                census_config, 21, BooleQuadratureSpec(mpf(1) / 200, mpf(1) / 100, 4001)
            )

    @pytest.mark.slow
    def test_census_against_convolution_oracle(self, census_config):
        # end-to-end: the full Fourier/Boole pipeline vs a dense float64
        # lattice convolution of all seven group measures
        eps = mpf("21.97")
        quad = inid.default_quadrature(40001)
        res = inid.overall_delta(census_config, eps, quad)

        def group_dense(a_l, s, radius_sd=14):
            radius = int(np.ceil(radius_sd * np.sqrt(s)))
            x = np.arange(-radius, radius + 1)
            w = np.exp(-x * x / (2 * s)) / np.sqrt(2 * np.pi * s)
            offs = x * a_l
            dense = np.zeros(2 * offs[-1] + 1)
            dense[offs + offs[-1]] = w
            return dense

        dist = np.array([1.0])
        order = sorted(
            zip(census_config.scaled_fractions,
                [float(g.lattice_variance) for g in census_config.groups]),
            key=lambda item: item[0] * np.sqrt(item[1]),
        )
        for a_l, s in order:
            dist = np.convolve(dist, group_dense(a_l, s))
        centre = (len(dist) - 1) // 2
        t_eps, cap_t = inid.thresholds(census_config, eps)
        m_main = int(mp.ceil(t_eps * census_config.lattice_scale))
        m_shift = int(mp.ceil(cap_t * census_config.lattice_scale))
        oracle_main = dist[centre + m_main:].sum()
        oracle_shift = dist[centre + m_shift:].sum()

        assert abs(float(res.main_integral) / oracle_main - 1) < 1e-8
        assert abs(float(res.shift_integral) / oracle_shift - 1) < 1e-6
        oracle_delta = oracle_main - float(exp(eps)) * oracle_shift
        assert abs(float(res.delta_two_sided) / oracle_delta - 1) < 1e-7

    @pytest.mark.slow
    def test_monotone_in_eps(self, census_config):
        # the tail estimate itself is strictly decreasing; the certified
        # upper bound is only monotone up to the ledger slack (the coarse
        # quadrature term grows with the kernel range)
        quad = inid.default_quadrature(20001)
        results = [
            inid.overall_delta(census_config, mpf(e), quad, include_shift=False)
            for e in (19, 20, 21, 22)
        ]
        mains = [r.main_integral for r in results]
        assert all(b < a for a, b in zip(mains, mains[1:]))
        for earlier, later in zip(results, results[1:]):
            assert later.delta_upper <= earlier.delta_upper + later.ledger.total


class TestSearches:
    @pytest.mark.slow
    def test_solve_eps_consistency(self, census_config):
        quad = inid.default_quadrature(50001)
        target = mpf("1e-8")
        result = inid.solve_eps(census_config, target, quad, eps_tol=mpf("0.05"))
        assert result.bracketed
        assert result.delta_upper <= target
        below = inid.overall_delta(
            census_config, result.eps - mpf("0.1"), quad, include_shift=False
        )
        assert below.delta_upper > target

    @pytest.mark.slow
    def test_scale_search_matches_grid(self, census_config):
        quad = inid.default_quadrature(50001)
        eps_target, delta_target = mpf(19), mpf("1e-8")
        result = inid.uniform_scale_search(
            census_config, eps_target, delta_target, quad, m_tol=mpf("0.005")
        )
        assert result.delta_upper <= delta_target
        # grid oracle: the smallest satisfying multiplier on a 0.005 grid
        grid = [mpf("0.97") + i * mpf("0.005") for i in range(7)]
        feasible = [
            m
            for m in grid
            if inid.overall_delta(
                census_config.scaled(m), eps_target, quad, include_shift=False
            ).delta_upper
            <= delta_target
        ]
        assert feasible
        assert abs(result.multiplier - feasible[0]) <= mpf("0.01")

    def test_scale_identity_reproduces(self, census_config):
        assert census_config.scaled(1).groups[0].sigma2 == census_config.groups[0].sigma2
