"""Heterogeneous (per-level) composition of discrete Gaussian mechanisms.

A total zCDP budget rho is split into fractions a_i, level i running n_i
folds of noise N_Z(0, sigma_i^2) with sigma_i^2 = n/(2 a_i rho), n the common
per-level query count.  The privacy profile is

    delta(eps) = P[sum_i a_i W_i > t_eps] - e^eps P[sum_i a_i W_i > T_eps],

W_i the centred group sums, t_eps = (n/2)(eps/rho - 1), T_eps = (n/2)(eps/rho + 1).
Each tail is approximated in four certified stages:

1. replace every group sum by the lattice measure
   nu(W_i = x) = phi(x / sqrt(n_i sigma_i^2)) / sqrt(n_i sigma_i^2) on Z
   (truncation and residual-product errors);
2. rewrite the lattice tail, scaled to integers through a_i L with
   L = lattice_scale, as a Fourier integral of a Dirichlet kernel times the
   product of group characteristic functions over [0, pi] (mass above the
   summation cap is a per-group tail error);
3. cut the integral to [0, 1/100]: the product of characteristic functions
   is certified below a sieve bound on [1/100, pi] through per-interval
   monotonicity on the union of the groups' period grids;
4. evaluate the remaining integral by composite Boole quadrature whose error
   constant comes from a moment bound on the sixth derivative.

Every stage contributes named terms to an ErrorLedger; the certified upper
profile bound drops the (nonnegative) subtracted term and adds the ledger of
the first tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from mpmath import ceil as mp_ceil
from mpmath import exp, floor, fsum, log, mp, mpf, pi, sqrt

from . import zcdp
from .hp import (
    BooleQuadratureSpec,
    boole_error_bound,
    boole_integrate,
    clamp_probability,
    dirichlet_cos_sum,
    series_cutoff,
)
from .iid import ErrorLedger, residual_bound

DEFAULT_LATTICE_SCALE = 1000
DEFAULT_BOOLE_POINTS = 400_001
CONSISTENCY_TOL = mpf("1e-12")


@dataclass(frozen=True)
class AllocationGroup:
    """One i.i.d. group: budget fraction, fold count, derived noise level."""

    a: mpf
    n_folds: int
    sigma2: mpf
    names: tuple = ()

    @property
    def lattice_variance(self) -> mpf:
        """Variance n_i sigma_i^2 of the group's lattice Gaussian measure."""
        return self.n_folds * self.sigma2


class GroupMeasure:
    """Lattice weight nu(x) = phi(x/sqrt(s))/sqrt(s) on Z, s = n_i sigma_i^2.

    Not a probability measure, but its total mass is within ~e^{-2 pi^2 s}
    of 1.  The characteristic function has the Poisson closed form
    sum_k exp(-s (omega - 2 pi k)^2 / 2).
    """

    def __init__(self, lattice_variance):
        self.s = mpf(lattice_variance)
        if self.s <= 0:
            raise ValueError("lattice variance must be positive")
        self._root = sqrt(2 * pi * self.s)

    def weight(self, x) -> mpf:
        return exp(-mpf(x) ** 2 / (2 * self.s)) / self._root

    def _geometric_remainder(self, x: int, term) -> mpf:
        # past x the terms shrink at least geometrically:
        # weight(x+1)/weight(x) = exp(-(2x+1)/(2s)) < 1 for x >= 0
        ratio = exp(-(2 * mpf(x) + 1) / (2 * self.s))
        return term * ratio / (1 - ratio)

    def total_mass(self) -> mpf:
        """Upper estimate of sum_x nu(x), exact to ~10^-(dps+30) relative."""
        radius = int(mp_ceil(sqrt(self.s) * sqrt(2 * (mp.dps + 10) * mp.log(10)))) + 2
        total = fsum(self.weight(x) for x in range(-radius, radius + 1))
        return total + 2 * self._geometric_remainder(radius, self.weight(radius))

    def tail(self, threshold) -> mpf:
        """Certified upper bound on nu(X > threshold), by direct summation."""
        threshold = mpf(threshold)
        start = int(floor(threshold)) + 1
        cutoff = series_cutoff(30)
        total = mpf(0)
        x = start
        while True:
            term = self.weight(x)
            total += term
            if x > 0 and term <= cutoff * max(total, mpf(1)):
                return total + self._geometric_remainder(x, term)
            x += 1

    def abs_moment(self, power: int) -> mpf:
        """Upper estimate of sum_x |x|^p nu(x) (measure mass included)."""
        if power == 0:
            return self.total_mass()
        radius = int(mp_ceil(sqrt(self.s) * sqrt(2 * (mp.dps + 10) * mp.log(10)))) + 2
        total = fsum(
            mpf(x) ** power * self.weight(x) for x in range(1, radius + 1)
        )
        # doubling the Gaussian-ratio remainder covers the polynomial factor:
        # ((x+1)/x)^p e^{-(2x+1)/2s} <= 2 e^{-(2x+1)/2s} holds for p <= 6 at
        # x >= radius >= 20 sqrt(s)
        last = mpf(radius) ** power * self.weight(radius)
        return 2 * (total + 2 * self._geometric_remainder(radius, last))

    def char(self, omega, k_extra: int) -> mpf:
        """Characteristic function at omega via the Poisson closed form."""
        omega = mpf(omega)
        k0 = int(floor(omega / (2 * pi)))
        total = mpf(0)
        for k in range(k0 - k_extra, k0 + 2 + k_extra):
            total += exp(-self.s * (omega - 2 * pi * k) ** 2 / 2)
        return total


@dataclass
class AllocationConfig:
    """Budget split rho -> groups (a_i, n_i) with sigma_i^2 = n/(2 a_i rho).

    ``queries_per_level`` is the common per-level fold count n; consistency
    requires sum_i a_i n_i = n (exactly, for the threshold algebra).  Every
    a_i * lattice_scale must be an integer: the Fourier step sums the scaled
    combination over the integer lattice.
    """

    rho: mpf
    groups: list
    lattice_scale: int = DEFAULT_LATTICE_SCALE
    queries_per_level: mpf = 10
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.rho = mpf(self.rho)
        self.queries_per_level = mpf(self.queries_per_level)
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.lattice_scale < 1 or self.lattice_scale != int(self.lattice_scale):
            raise ValueError("lattice_scale must be a positive integer")
        if not self.groups:
            raise ValueError("allocation needs at least one group")
        n_eff = fsum(g.a * g.n_folds for g in self.groups)
        if abs(n_eff - self.queries_per_level) > CONSISTENCY_TOL * self.queries_per_level:
            raise ValueError(
                f"sum of a_i * n_i = {n_eff} does not match the per-level "
                f"fold count {self.queries_per_level}"
            )

    @classmethod
    def from_fractions(
        cls,
        rho,
        fractions_and_folds,
        lattice_scale: int = DEFAULT_LATTICE_SCALE,
        queries_per_level=10,
        names=None,
    ) -> "AllocationConfig":
        rho = mpf(rho)
        queries_per_level = mpf(queries_per_level)
        groups = []
        for idx, (a, n_folds) in enumerate(fractions_and_folds):
            a = mpf(a)
            if not 0 < a < 1:
                raise ValueError(f"budget fraction must lie in (0, 1), got {a}")
            if n_folds < 1 or n_folds != int(n_folds):
                raise ValueError(f"fold count must be a positive integer, got {n_folds}")
            scaled = a * lattice_scale
            if abs(scaled - mp.nint(scaled)) > mpf("1e-9"):
                raise ValueError(
                    f"fraction {a} times lattice scale {lattice_scale} is not "
                    "an integer; the Fourier step requires a_i * L in Z"
                )
            label = () if names is None else tuple(names[idx])
            sigma2 = queries_per_level / (2 * a * rho)
            groups.append(AllocationGroup(a, int(n_folds), sigma2, label))
        return cls(rho, groups, lattice_scale, queries_per_level)

    @property
    def n_eff(self) -> mpf:
        return fsum(g.a * g.n_folds for g in self.groups)

    @property
    def scaled_fractions(self) -> tuple:
        """Integers a_i * L."""
        return tuple(int(mp.nint(g.a * self.lattice_scale)) for g in self.groups)

    @property
    def combination_sd(self) -> mpf:
        """Standard deviation of sum_i a_i W_i."""
        return sqrt(fsum(g.a**2 * g.lattice_variance for g in self.groups))

    def measures(self):
        key = ("measures", mp.dps)
        if key not in self._cache:
            self._cache[key] = [GroupMeasure(g.lattice_variance) for g in self.groups]
        return self._cache[key]

    def scaled(self, multiplier) -> "AllocationConfig":
        """Config with every sigma_i^2 multiplied by ``multiplier``.

        Equivalent to spending rho/multiplier under the same fractions.
        """
        multiplier = mpf(multiplier)
        if multiplier <= 0:
            raise ValueError("scale multiplier must be positive")
        groups = [
            AllocationGroup(g.a, g.n_folds, g.sigma2 * multiplier, g.names)
            for g in self.groups
        ]
        return AllocationConfig(
            self.rho / multiplier, groups, self.lattice_scale, self.queries_per_level
        )


def sigmas_from_allocation(config: AllocationConfig) -> list:
    """Per-group variance proxies sigma_i^2 = n / (2 a_i rho)."""
    return [g.sigma2 for g in config.groups]


def thresholds(config: AllocationConfig, eps):
    """Privacy-loss thresholds (t_eps, T_eps) = (n/2)(eps/rho -+ 1)."""
    eps = mpf(eps)
    half_n = config.queries_per_level / 2
    return half_n * (eps / config.rho - 1), half_n * (eps / config.rho + 1)


@dataclass(frozen=True)
class TruncationErrors:
    """Errors from swapping the true group sums for the lattice measure.

    prob_tail / measure_tail: both sides restricted to |W_i| <= 12 sigma_i
    sqrt(n_i) (two-sided sub-Gaussian tails, 2 e^{-72} per group);
    residual_product: telescoped product difference, per-group lattice
    residual times the sup bounds 1/sqrt(2 pi n_j sigma_j^2) (+ residual) of
    the remaining factors, times the truncated box volume prod 24 sigma_j
    sqrt(n_j).
    """

    prob_tail: mpf
    measure_tail: mpf
    residual_product: mpf

    @property
    def total(self) -> mpf:
        return self.prob_tail + self.measure_tail + self.residual_product


def truncation_errors(config: AllocationConfig) -> TruncationErrors:
    key = ("trunc", mp.dps)
    hit = config._cache.get(key)
    if hit is not None:
        return hit
    k = len(config.groups)
    per_side = 2 * k * exp(-mpf(144) / 2)

    res = [residual_bound(g.n_folds, g.sigma2).r for g in config.groups]
    sup_density = [1 / sqrt(2 * pi * g.lattice_variance) for g in config.groups]
    box = mpf(1)
    for g in config.groups:
        box *= 24 * sqrt(g.lattice_variance)
    total = mpf(0)
    for i in range(k):
        prod = mpf(1)
        for j in range(k):
            if j < i:
                prod *= sup_density[j] + res[j]
            elif j > i:
                prod *= sup_density[j]
        total += res[i] * prod
    out = TruncationErrors(per_side, per_side, box * total)
    config._cache[key] = out
    return out


def _kernel_range(config: AllocationConfig, threshold):
    """Integer summation range [m_lo, m_hi] for the scaled lattice tail.

    m_lo = ceil(threshold * L); the cap is 6x the threshold as long as that
    clears 20 combined standard deviations, else 20 sd (keeps the cap-tail
    error meaningful for small thresholds).
    """
    threshold = mpf(threshold)
    scale = config.lattice_scale
    cap = max(6 * threshold, 20 * config.combination_sd)
    m_lo = int(mp_ceil(threshold * scale))
    m_hi = int(mp_ceil(cap * scale))
    if m_hi < m_lo:
        raise ValueError("empty kernel range; threshold too large for the cap")
    return m_lo, m_hi


def lattice_cap_tail(config: AllocationConfig, threshold) -> mpf:
    """Measure mass above the kernel cap: union bound over groups.

    nu(sum a_i L X_i > cap L) <= sum_i nu(X_i > cap/(k a_i)) * prod_{j != i} mass_j.
    """
    _, m_hi = _kernel_range(config, threshold)
    k = len(config.groups)
    measures = config.measures()
    masses = [m.total_mass() for m in measures]
    total = mpf(0)
    for i, (g, measure) in enumerate(zip(config.groups, measures)):
        cut = mpf(m_hi) / (k * g.a * config.lattice_scale)
        others = mpf(1)
        for j, mass in enumerate(masses):
            if j != i:
                others *= mass
        total += measure.tail(cut) * others
    return total


class _TailIntegrand:
    """F(t) = (1/pi) * sum_{m=m_lo}^{m_hi} cos(t m) * prod_i f_i(a_i L t).

    Integrating F over [0, pi] gives the lattice-measure mass of
    sum_i a_i L X_i in [m_lo, m_hi].  Groups are evaluated in decreasing
    order of s_i (a_i L)^2 so that a dead product is detected early; any
    partial product below the precision floor returns exactly 0 (the
    discarded values are smaller than every ledger term).
    """

    def __init__(self, config: AllocationConfig, m_lo: int, m_hi: int):
        self.m_lo = m_lo
        self.m_hi = m_hi
        digits = mp.dps
        ln10 = mp.log(10)
        groups = []
        for g, measure in zip(config.groups, config.measures()):
            a_l = int(mp.nint(g.a * config.lattice_scale))
            s = measure.s
            # dual terms beyond k0 - extra .. k0 + 1 + extra sit at distance
            # >= 2 pi (extra + 1), below the precision floor once past the
            # Gaussian window w
            w = sqrt(2 * (digits + 30) * ln10 / s)
            k_extra = max(0, int(mp_ceil(w / (2 * pi) - 1)))
            groups.append((s * a_l * a_l, a_l, measure, k_extra))
        groups.sort(key=lambda item: -item[0])
        self._groups = groups
        self._floor = mpf(10) ** (-(digits + 25))

    def product(self, t) -> mpf:
        prod = mpf(1)
        for _, a_l, measure, k_extra in self._groups:
            prod *= measure.char(a_l * t, k_extra)
            if prod < self._floor:
                return mpf(0)
        return prod

    def __call__(self, t) -> mpf:
        prod = self.product(t)
        if not prod:
            return mpf(0)
        return dirichlet_cos_sum(self.m_lo, self.m_hi, t) * prod / pi


def integrand_F(config: AllocationConfig, eps, t, shifted: bool = False) -> mpf:
    """The Fourier integrand at t in [0, pi] (t = 0 uses the kernel limit).

    ``shifted`` selects the T_eps threshold (the e^eps-weighted tail).
    """
    t_eps, cap_t = thresholds(config, eps)
    threshold = cap_t if shifted else t_eps
    m_lo, m_hi = _kernel_range(config, threshold)
    return _TailIntegrand(config, m_lo, m_hi)(mpf(t))


SIEVE_POINTS_PER_HALF_PERIOD = 200
SIEVE_TARGET = mpf("1e-35")
# covers float64 rounding in the grid scan; the certified margin is orders
# of magnitude wider
SIEVE_SAFETY = mpf("1.000001")


def _sieve_sup(config: AllocationConfig, lower: float) -> mpf:
    """Certified sup of prod_i |f_i(a_i L t)| over [lower, pi].

    Each factor is 2 pi/(a_i L)-periodic and monotone between the points of
    its own half-period grid (200 points per half period).  On every
    interval of the union grid each factor is therefore monotone, so the
    product of endpoint maxima bounds the product on the interval.  Runs in
    float64 log space; the result is inflated by SIEVE_SAFETY.
    """
    key = ("sieve", float(lower), mp.dps)
    hit = config._cache.get(key)
    if hit is not None:
        return hit
    grids = []
    for a_l in config.scaled_fractions:
        step = np.pi / (SIEVE_POINTS_PER_HALF_PERIOD * a_l)
        grids.append(np.arange(0, SIEVE_POINTS_PER_HALF_PERIOD * a_l + 1) * step)
    grid = np.unique(np.concatenate(grids + [np.array([float(lower), np.pi])]))
    grid = grid[grid <= np.pi + 1e-15]

    ln_prod_max = np.zeros(len(grid) - 1)
    for g, a_l in zip(config.groups, config.scaled_fractions):
        s = float(g.lattice_variance)
        om = a_l * grid
        k_near = np.rint(om / (2 * np.pi))
        expos = np.stack(
            [-s * (om - 2 * np.pi * (k_near + dk)) ** 2 / 2 for dk in (-2, -1, 0, 1, 2)]
        )
        peak = expos.max(axis=0)
        ln_f = peak + np.log(np.exp(expos - peak).sum(axis=0))
        ln_prod_max += np.maximum(ln_f[:-1], ln_f[1:])

    start = np.searchsorted(grid, float(lower), side="left")
    start = max(min(start, len(grid) - 2), 0)
    sup = mpf(float(ln_prod_max[start:].max()))
    out = exp(sup) * SIEVE_SAFETY
    config._cache[key] = out
    return out


@dataclass(frozen=True)
class SieveDomainBound:
    """Certified bound on the integral of F over the cut domain [lower, pi]."""

    value: mpf
    sup_product: mpf
    kernel_count: int
    lower: mpf
    meets_target: bool


def sieve_domain_bound(
    config: AllocationConfig, eps, shifted: bool = False, lower=mpf(1) / 100
) -> SieveDomainBound:
    """|int_lower^pi F| <= (pi - lower) * (count/pi) * sup of the product.

    ``meets_target`` records whether the certified sup stays below the
    1e-35 working target; when it does not, the (larger) certified bound is
    still returned, just flagged.
    """
    lower = mpf(lower)
    t_eps, cap_t = thresholds(config, eps)
    threshold = cap_t if shifted else t_eps
    m_lo, m_hi = _kernel_range(config, threshold)
    count = m_hi - m_lo + 1
    sup = _sieve_sup(config, float(lower))
    value = (pi - lower) * count * sup / pi
    return SieveDomainBound(value, sup, count, lower, sup <= SIEVE_TARGET)


def _power_sum(p: int, n: int) -> Fraction:
    """sum_{m=1}^{n} m^p for p <= 6, exactly."""
    if n <= 0:
        return Fraction(0)
    n = Fraction(n)
    if p == 0:
        return n
    if p == 1:
        return n * (n + 1) / 2
    if p == 2:
        return n * (n + 1) * (2 * n + 1) / 6
    if p == 3:
        return (n * (n + 1) / 2) ** 2
    if p == 4:
        return n * (n + 1) * (2 * n + 1) * (3 * n * n + 3 * n - 1) / 30
    if p == 5:
        return n * n * (n + 1) ** 2 * (2 * n * n + 2 * n - 1) / 12
    if p == 6:
        return n * (n + 1) * (2 * n + 1) * (3 * n**4 + 6 * n**3 - 3 * n + 1) / 42
    raise ValueError(f"power sums implemented for p <= 6, got {p}")


def _range_power_sum(p: int, lo: int, hi: int) -> mpf:
    """sum_{m=lo}^{hi} m^p, exact (requires lo >= 1 for p = 0 handling)."""
    if hi < lo:
        return mpf(0)
    if lo < 1:
        # split off the nonpositive part; only reachable for small thresholds
        head = fsum(mpf(m) ** p for m in range(lo, 1))
        lo = 1
        if hi < 1:
            return head
        frac = _power_sum(p, hi)
        return head + mpf(frac.numerator) / frac.denominator
    frac = _power_sum(p, hi) - _power_sum(p, lo - 1)
    return mpf(frac.numerator) / frac.denominator


@dataclass(frozen=True)
class SixthDerivativeBound:
    """M6 >= sup |F^(6)| on the integration interval, from moment bounds."""

    value: mpf
    abs_moment_bounds: dict
    m_lo: int
    m_hi: int


def _moment_bounds(config: AllocationConfig) -> dict:
    """Upper bounds A_p on the measure moments of X = sum_i a_i L X_i.

    Minkowski across groups on the normalised moments, multiplied back by
    the product of group masses: A_p = (prod masses) * (sum_i a_i L m_{i,p}^{1/p})^p.
    """
    key = ("moments", mp.dps)
    hit = config._cache.get(key)
    if hit is not None:
        return hit
    measures = config.measures()
    masses = [m.total_mass() for m in measures]
    mass_prod = mpf(1)
    for m in masses:
        mass_prod *= m
    bounds = {0: mass_prod}
    for p in range(1, 7):
        acc = mpf(0)
        for a_l, measure, mass in zip(config.scaled_fractions, measures, masses):
            normalised = measure.abs_moment(p) / mass
            acc += a_l * normalised ** (mpf(1) / p)
        bounds[p] = mass_prod * acc**p
    config._cache[key] = bounds
    return bounds


def sixth_derivative_bound(
    config: AllocationConfig, eps, shifted: bool = False
) -> SixthDerivativeBound:
    """M6 = (1/pi) sum_{m} sum_j C(6, j) m^{6-j} A_j over the kernel range."""
    t_eps, cap_t = thresholds(config, eps)
    threshold = cap_t if shifted else t_eps
    m_lo, m_hi = _kernel_range(config, threshold)
    bounds = _moment_bounds(config)
    binom = (1, 6, 15, 20, 15, 6, 1)
    total = mpf(0)
    for j in range(7):
        total += binom[j] * bounds[j] * _range_power_sum(6 - j, m_lo, m_hi)
    return SixthDerivativeBound(total / pi, bounds, m_lo, m_hi)


def default_quadrature(n_points: int = DEFAULT_BOOLE_POINTS) -> BooleQuadratureSpec:
    return BooleQuadratureSpec(mpf(0), mpf(1) / 100, n_points)


QUAD_FLAG_THRESHOLD = mpf("1e-12")


@dataclass(frozen=True)
class OverallDelta:
    """Profile estimates with their certifying ledger.

    delta_upper drops the subtracted tail (always an upper bound on the true
    delta) and adds the first tail's error budget; delta_two_sided keeps
    both tails, certified only up to ledger.total (which carries the
    e^eps-scaled shift-side terms).
    """

    delta_upper: mpf
    delta_two_sided: mpf
    ledger: ErrorLedger
    main_integral: mpf
    shift_integral: mpf
    quad_too_coarse: bool


def _side_terms(config, threshold, quad, trunc_total):
    m_lo, m_hi = _kernel_range(config, threshold)
    integrand = _TailIntegrand(config, m_lo, m_hi)
    bounds = _moment_bounds(config)
    binom = (1, 6, 15, 20, 15, 6, 1)
    m6 = fsum(
        binom[j] * bounds[j] * _range_power_sum(6 - j, m_lo, m_hi) for j in range(7)
    ) / pi
    value, quad_err = boole_integrate(integrand, quad, m6)
    cap_tail = lattice_cap_tail(config, threshold)
    sup = _sieve_sup(config, float(quad.b))
    cut_err = (pi - quad.b) * (m_hi - m_lo + 1) * sup / pi
    err_total = trunc_total + cap_tail + cut_err + quad_err
    return value, err_total, cap_tail, cut_err, quad_err


def overall_delta(
    config: AllocationConfig,
    eps,
    quad: BooleQuadratureSpec | None = None,
    include_shift: bool = True,
) -> OverallDelta:
    """Certified overall privacy profile at eps.

    When ``include_shift`` is false only the first tail is computed (enough
    for delta_upper and for budget searches); delta_two_sided is then
    reported as delta_upper.
    """
    eps = mpf(eps)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if quad is None:
        quad = default_quadrature()
    if quad.a != 0:
        raise ValueError("the Fourier integral starts at t = 0")
    t_eps, cap_t = thresholds(config, eps)
    trunc = truncation_errors(config)

    main, err_main, cap_main, cut_main, quad_main = _side_terms(
        config, t_eps, quad, trunc.total
    )
    ledger = ErrorLedger()
    ledger.add("trunc_prob_tail_main", trunc.prob_tail)
    ledger.add("trunc_measure_tail_main", trunc.measure_tail)
    ledger.add("trunc_residual_product_main", trunc.residual_product)
    ledger.add("lattice_cap_tail_main", cap_main)
    ledger.add("domain_cut_main", cut_main)
    ledger.add("quadrature_main", quad_main)

    quad_flags = quad_main > QUAD_FLAG_THRESHOLD
    if include_shift:
        shift, err_shift, cap_shift, cut_shift, quad_shift = _side_terms(
            config, cap_t, quad, trunc.total
        )
        scale = exp(eps)
        ledger.add("trunc_prob_tail_shift", scale * trunc.prob_tail)
        ledger.add("trunc_measure_tail_shift", scale * trunc.measure_tail)
        ledger.add("trunc_residual_product_shift", scale * trunc.residual_product)
        ledger.add("lattice_cap_tail_shift", scale * cap_shift)
        ledger.add("domain_cut_shift", scale * cut_shift)
        ledger.add("quadrature_shift", scale * quad_shift)
        two_sided = clamp_probability(main - scale * shift)
        quad_flags = quad_flags or quad_shift > QUAD_FLAG_THRESHOLD
    else:
        shift = mpf(0)
        two_sided = None

    upper = min(mpf(1), main + err_main)
    if two_sided is None:
        two_sided = upper
    ledger.flagged = bool(quad_flags)
    return OverallDelta(upper, two_sided, ledger, main, shift, bool(quad_flags))


@dataclass(frozen=True)
class EpsSearchResult:
    eps: mpf
    delta_upper: mpf
    evaluations: int
    bracketed: bool


def solve_eps(
    config: AllocationConfig,
    delta_target,
    quad: BooleQuadratureSpec | None = None,
    eps_tol=mpf("0.02"),
) -> EpsSearchResult:
    """Smallest eps whose certified upper profile stays below the target.

    Bisection on delta_upper (one Fourier integral per step).  The zCDP
    conversion of the same budget brackets from above; the lower end expands
    downward until it violates the target.
    """
    delta_target = mpf(delta_target)
    if not (0 < delta_target < 1):
        raise ValueError("delta target must lie in (0, 1)")
    if quad is None:
        quad = default_quadrature()

    evals = 0

    def upper(e):
        nonlocal evals
        evals += 1
        return overall_delta(config, e, quad, include_shift=False).delta_upper

    hi = zcdp.eps_from_rho(config.rho, delta_target)
    d_hi = upper(hi)
    if d_hi > delta_target:  # tighter accounting should beat zCDP; defensive
        return EpsSearchResult(hi, d_hi, evals, False)
    lo = hi - 2
    while lo > config.rho:
        d_lo = upper(lo)
        if d_lo > delta_target:
            break
        hi, d_hi = lo, d_lo
        lo -= 2
    lo = max(lo, config.rho)
    while hi - lo > mpf(eps_tol):
        mid = (lo + hi) / 2
        d_mid = upper(mid)
        if d_mid <= delta_target:
            hi, d_hi = mid, d_mid
        else:
            lo = mid
    return EpsSearchResult(hi, d_hi, evals, True)


@dataclass(frozen=True)
class ScaleSearchResult:
    multiplier: mpf
    variance_reduction_pct: mpf
    delta_upper: mpf
    evaluations: int


def uniform_scale_search(
    config: AllocationConfig,
    eps_target,
    delta_target,
    quad: BooleQuadratureSpec | None = None,
    m_tol=mpf("0.005"),
) -> ScaleSearchResult:
    """Largest common variance reduction keeping (eps_target, delta_target).

    Bisection on the multiplier m applied to every sigma_i^2 (shrinking all
    noise raises the profile monotonically); each step evaluates the
    certified upper profile of the scaled configuration.
    """
    eps_target = mpf(eps_target)
    delta_target = mpf(delta_target)
    if quad is None:
        quad = default_quadrature()

    evals = 0

    def upper(m):
        nonlocal evals
        evals += 1
        return overall_delta(
            config.scaled(m), eps_target, quad, include_shift=False
        ).delta_upper

    d_one = upper(mpf(1))
    if d_one > delta_target:
        raise ValueError(
            f"the unscaled configuration already violates the target: "
            f"delta_upper = {d_one}"
        )
    hi, d_hi = mpf(1), d_one
    lo = mpf("0.85")
    while True:
        d_lo = upper(lo)
        if d_lo > delta_target:
            break
        hi, d_hi = lo, d_lo
        lo -= mpf("0.1")
        if lo <= mpf("0.05"):
            raise ValueError("scale search failed to bracket the target")
    while hi - lo > mpf(m_tol):
        mid = (lo + hi) / 2
        d_mid = upper(mid)
        if d_mid <= delta_target:
            hi, d_hi = mid, d_mid
        else:
            lo = mid
    return ScaleSearchResult(hi, 100 * (1 - hi), d_hi, evals)
