"""The discrete Gaussian distribution N_Z(mu, sigma^2) on the integers.

Mass at x is proportional to exp(-(x - mu)^2 / (2 sigma^2)).  The parameter
sigma^2 is a *variance proxy*: the true variance is marginally smaller, by a
gap of order exp(-2 pi^2 sigma^2) that this module computes exactly through
the Poisson-dual (theta-series) form rather than by cancellation-prone
moment differences.

Summation conventions:

* scalar quantities (normalizer, tails, moments) truncate lattice sums at a
  radius chosen from the working precision, ``max(16, sqrt(2 D ln 10)) * sigma``
  plus slack, so the truncated mass is below the precision floor;
* the sampler truncates its support at ``16 sigma`` (mass < 1e-55, folded
  into the boundary cells) and draws by inverse CDF.
"""

from __future__ import annotations

import numpy as np
from mpmath import cos, exp, floor, mp, mpf, pi, sin, sqrt

from .hp import series_cutoff

SAMPLER_RADIUS_SIGMAS = 16


def sum_radius(sigma, extra_digits: int = 10) -> int:
    """Lattice radius (in integers) so the dropped tail is below precision."""
    sigma = mpf(sigma)
    digits = mp.dps + extra_digits
    r = sigma * sqrt(2 * digits * mp.log(10))
    return int(mp.ceil(max(r, SAMPLER_RADIUS_SIGMAS * sigma))) + 2


def normalizer(mu, sigma2) -> mpf:
    """S(mu) = sum_{x in Z} exp(-(x - mu)^2 / (2 sigma^2)), by direct summation.

    Periodic and even in mu: S(mu) = S(mu + 1) = S(-mu), maximised over the
    unit cell at integer mu.
    """
    mu = mpf(mu)
    sigma2 = mpf(sigma2)
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    frac = mu - floor(mu)  # S is 1-periodic in mu
    radius = sum_radius(sqrt(sigma2))
    total = mpf(0)
    for x in range(-radius, radius + 2):
        total += exp(-((x - frac) ** 2) / (2 * sigma2))
    return total


def poisson_normalizer(mu, sigma2) -> mpf:
    """S(mu) through Poisson summation: sqrt(2 pi sigma^2) * theta series.

    Independent route to ``normalizer``; the series over the dual lattice
    converges in a handful of terms for sigma^2 >= 1.
    """
    mu = mpf(mu)
    sigma2 = mpf(sigma2)
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    q = exp(-2 * pi**2 * sigma2)
    cutoff = series_cutoff()
    total = mpf(1)
    k = 1
    while True:
        term = 2 * q ** (k * k) * cos(2 * pi * k * mu)
        total += term
        if q ** (k * k) <= cutoff:
            break
        k += 1
    return sqrt(2 * pi * sigma2) * total


def mean_bias(mu, sigma2) -> mpf:
    """E[N_Z(mu, sigma^2)] - mu, exactly zero iff mu is a half-integer.

    Computed through the Poisson-dual form
        bias = -4 pi sigma^2 * sum_k k q^{k^2} sin(2 pi k mu) / theta(mu),
    q = exp(-2 pi^2 sigma^2), which resolves the sub-exponential magnitude
    without catastrophic cancellation.  Strictly negative for mu in (0, 1/2).
    """
    mu = mpf(mu)
    sigma2 = mpf(sigma2)
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    frac = mu - floor(mu)
    if 2 * frac == int(2 * frac):  # half-integer: lattice symmetric about mu
        return mpf(0)
    q = exp(-2 * pi**2 * sigma2)
    cutoff = series_cutoff()
    num = mpf(0)
    den = mpf(1)
    k = 1
    while True:
        qk = q ** (k * k)
        num += k * qk * sin(2 * pi * k * frac)
        den += 2 * qk * cos(2 * pi * k * frac)
        if k * qk <= cutoff:
            break
        k += 1
    return -4 * pi * sigma2 * num / den


def _dual_power_sum(q, power: int) -> mpf:
    """sum_{k>=1} k^power q^{k^2}."""
    cutoff = series_cutoff()
    total = mpf(0)
    k = 1
    while True:
        term = mpf(k) ** power * q ** (k * k)
        total += term
        if term <= cutoff * max(total, mpf(1)):
            break
        k += 1
    return total


class DiscreteGaussian:
    """Immutable N_Z(mu, sigma^2); thread-safe for concurrent reads."""

    def __init__(self, sigma2, mu=0):
        sigma2 = mpf(sigma2)
        if sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        self.sigma2 = sigma2
        self.sigma = sqrt(sigma2)
        self.mu = mpf(mu)
        self._norm = normalizer(self.mu, sigma2)
        self._radius = sum_radius(self.sigma)

    def __repr__(self):
        return f"DiscreteGaussian(sigma2={self.sigma2}, mu={self.mu})"

    def pmf(self, x) -> mpf:
        return exp(-((mpf(x) - self.mu) ** 2) / (2 * self.sigma2)) / self._norm

    def tail_prob(self, t) -> mpf:
        """P[X > t].  Complements cdf exactly: tail_prob(t) + cdf(t) == 1."""
        t = mpf(t)
        lo = int(floor(self.mu)) - self._radius
        hi = int(floor(self.mu)) + self._radius + 1
        if t >= self.mu:
            start = int(floor(t)) + 1
            return self._mass(start, hi)
        stop = int(floor(t))
        return 1 - self._mass(lo, stop)

    def cdf(self, t) -> mpf:
        """P[X <= t] = 1 - tail_prob(t)."""
        return 1 - self.tail_prob(t)

    def _mass(self, lo: int, hi: int) -> mpf:
        total = mpf(0)
        for x in range(lo, hi + 1):
            total += exp(-((x - self.mu) ** 2) / (2 * self.sigma2))
        return total / self._norm

    def variance(self) -> mpf:
        """Exact variance, marginally below the proxy sigma^2.

        Var = sigma^2 - c2/theta with c2 = 8 pi^2 sigma^4 sum_k k^2 q^{k^2}
        and theta = 1 + 2 sum_k q^{k^2}, q = exp(-2 pi^2 sigma^2); the gap is
        produced directly in its own floating scale, so it stays meaningful
        far below the working precision of sigma^2 itself.
        """
        self._require_centred()
        q = exp(-2 * pi**2 * self.sigma2)
        theta = 1 + 2 * _dual_power_sum(q, 0)
        c2 = 8 * pi**2 * self.sigma2**2 * _dual_power_sum(q, 2)
        return self.sigma2 - c2 / theta

    def variance_gap(self) -> mpf:
        """sigma^2 - Var, a strictly positive sub-exponential quantity."""
        self._require_centred()
        q = exp(-2 * pi**2 * self.sigma2)
        theta = 1 + 2 * _dual_power_sum(q, 0)
        return 8 * pi**2 * self.sigma2**2 * _dual_power_sum(q, 2) / theta

    def cumulants(self, order: int) -> mpf:
        """Cumulants of the centred distribution for order in {1,...,6}.

        Odd orders vanish by symmetry.  Even orders come from the log of the
        Poisson-dual generating function: with m_r = (d^r G / d psi^r)(0) / G(0),
            kappa_2 = sigma^2 + m_2
            kappa_4 = m_4 - 3 m_2^2
            kappa_6 = m_6 - 15 m_4 m_2 + 30 m_2^3,
        where m_2 = -c2/theta, m_4 = c4/theta, m_6 = -c6/theta and
        c_r = 2 (2 pi sigma^2)^r sum_k k^r q^{k^2}.
        """
        self._require_centred()
        if order in (1, 3, 5):
            return mpf(0)
        if order not in (2, 4, 6):
            raise ValueError(f"unsupported cumulant order {order}")
        q = exp(-2 * pi**2 * self.sigma2)
        theta = 1 + 2 * _dual_power_sum(q, 0)
        w = 2 * pi * self.sigma2

        def c(r):
            return 2 * w**r * _dual_power_sum(q, r)

        m2 = -c(2) / theta
        if order == 2:
            return self.sigma2 + m2
        m4 = c(4) / theta
        if order == 4:
            return m4 - 3 * m2**2
        m6 = -c(6) / theta
        return m6 - 15 * m4 * m2 + 30 * m2**3

    def _require_centred(self):
        if self.mu != 0:
            raise ValueError("moment identities are implemented for mu = 0")

    def sampler(self, seed) -> "DiscreteGaussianSampler":
        return DiscreteGaussianSampler(self, seed)


class DiscreteGaussianSampler:
    """Inverse-CDF sampler over the 16-sigma truncated support.

    The truncated mass (< 1e-55) is folded into the boundary cells.  The
    cumulative table is rounded to machine floats for vectorised search,
    which matches the 53-bit resolution of the uniform draws themselves.
    Holds per-instance RNG state: create one sampler per worker.
    """

    def __init__(self, dist: DiscreteGaussian, seed):
        self.dist = dist
        self.seed = seed
        half = int(mp.ceil(SAMPLER_RADIUS_SIGMAS * dist.sigma))
        centre = int(mp.nint(dist.mu))
        self.support = np.arange(centre - half, centre + half + 1, dtype=np.int64)
        cum = []
        acc = mpf(0)
        for x in self.support:
            acc += dist.pmf(int(x))
            cum.append(float(acc))
        cum[-1] = 1.0  # fold the truncated tail into the last cell
        self._cum = np.array(cum)
        self._rng = np.random.default_rng(seed)

    def draw(self) -> int:
        return int(self.draw_array(1)[0])

    def draw_array(self, size: int) -> np.ndarray:
        u = self._rng.random(size)
        idx = np.searchsorted(self._cum, u, side="right")
        return self.support[idx]
