"""Exact f-DP objects for discrete Gaussian mechanisms.

Trade-off curves are stored as knot lists (alpha, beta) with piecewise-linear
interpolation between knots; for lattice mechanisms the between-knot segments
correspond exactly to randomised likelihood-ratio tests, so the knots carry
the full curve.  Conversions to (epsilon, delta) follow the pointwise dual

    delta(eps) = 1 + max_t { -e^eps alpha(t) - beta(t) },

and the privacy-loss route delta = P[up-tail] - e^eps P[down-tail].
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from mpmath import exp, floor, mp, mpf, sqrt

from .dgauss import DiscreteGaussian, normalizer, sum_radius
from .hp import clamp_probability


def _validation_tol() -> mpf:
    return mpf(10) ** (-(mp.dps - 15))


@dataclass(frozen=True)
class TradeoffCurve:
    """Piecewise-linear convex trade-off curve as an ordered knot tuple."""

    knots: tuple

    def __post_init__(self):
        knots = tuple((mpf(a), mpf(b)) for a, b in self.knots)
        object.__setattr__(self, "knots", knots)
        if len(knots) < 2:
            raise ValueError("a trade-off curve needs at least two knots")
        tol = _validation_tol()
        alphas = [a for a, _ in knots]
        betas = [b for _, b in knots]
        for i in range(1, len(knots)):
            if not alphas[i] > alphas[i - 1]:
                raise ValueError("knot alphas must be strictly increasing")
            if betas[i] > betas[i - 1] + tol:
                raise ValueError("knot betas must be non-increasing")
        for a, b in knots:
            if a < -tol or a > 1 + tol or b < -tol or b > 1 + tol:
                raise ValueError("knots must lie in the unit square")
            if b > 1 - a + tol:
                raise ValueError("beta may not exceed 1 - alpha")
        # convexity: slopes between consecutive knots must be non-decreasing
        for i in range(1, len(knots) - 1):
            lhs = (betas[i] - betas[i - 1]) * (alphas[i + 1] - alphas[i])
            rhs = (betas[i + 1] - betas[i]) * (alphas[i] - alphas[i - 1])
            if lhs - rhs > tol:
                raise ValueError("knots do not describe a convex curve")

    def beta(self, alpha) -> mpf:
        """Linear interpolation of the curve at type-I error ``alpha``."""
        alpha = mpf(alpha)
        alphas = [a for a, _ in self.knots]
        if alpha <= alphas[0]:
            return self.knots[0][1]
        if alpha >= alphas[-1]:
            return self.knots[-1][1]
        i = bisect.bisect_right(alphas, alpha)
        (a0, b0), (a1, b1) = self.knots[i - 1], self.knots[i]
        return b0 + (b1 - b0) * (alpha - a0) / (a1 - a0)


IDENTITY_CURVE_KNOTS = ((mpf(0), mpf(1)), (mpf(1), mpf(0)))


def _dedupe_alpha(points):
    out = []
    for a, b in points:
        if out and a == out[-1][0]:
            if b < out[-1][1]:
                out[-1] = (a, b)
            continue
        out.append((a, b))
    return out


def single_tradeoff(sigma2, mu: int) -> TradeoffCurve:
    """Trade-off curve for testing N_Z(0, s2) against N_Z(mu, s2).

    Knots sit at alpha = P[X > t] for integer thresholds t, with
    beta = P[X <= t - mu]; interpolation between knots realises the
    randomised likelihood-ratio tests.  mu = 0 yields the identity curve.
    """
    if mu != int(mu) or mu < 0:
        raise ValueError(f"shift mu must be a nonnegative integer, got {mu}")
    mu = int(mu)
    if mu == 0:
        return TradeoffCurve(IDENTITY_CURVE_KNOTS)
    dist = DiscreteGaussian(sigma2)
    radius = int(mp.ceil(16 * dist.sigma)) + mu
    points = [(mpf(0), mpf(1))]
    for t in range(radius, -radius - 1, -1):
        points.append((dist.tail_prob(t), dist.cdf(t - mu)))
    points.append((mpf(1), mpf(0)))
    return TradeoffCurve(tuple(_dedupe_alpha(points)))


def single_delta(sigma2, mu: int, eps) -> mpf:
    """Privacy profile of one mechanism: delta(eps) in [0, 1].

    delta = P[X > eps s2/mu - mu/2] - e^eps P[X > eps s2/mu + mu/2] for
    X ~ N_Z(0, s2); both tails vanish beyond the truncated support, so very
    large eps returns exactly 0.
    """
    if mu != int(mu) or mu < 1:
        raise ValueError(f"shift mu must be a positive integer, got {mu}")
    eps = mpf(eps)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    dist = DiscreteGaussian(sigma2)
    centre = eps * dist.sigma2 / mu
    up = dist.tail_prob(centre - mpf(mu) / 2)
    down = dist.tail_prob(centre + mpf(mu) / 2)
    return clamp_probability(up - exp(eps) * down)


def even_odd_lattice_sums(sigma2):
    """The two lattice constants of the 2-fold composition.

    Returns (sum_u exp(-u^2/s2), sum_u exp(-(u + 1/2)^2/s2)): total weights
    of the even and odd sub-lattices of X1 + X2.  The first is strictly
    larger (shifted Gaussian sums decrease away from the lattice).
    """
    sigma2 = mpf(sigma2)
    return normalizer(0, sigma2 / 2), normalizer(mpf(1) / 2, sigma2 / 2)


def twofold_knots(sigma2, mu: int) -> TradeoffCurve:
    """Exact trade-off curve of the 2-fold i.i.d. composition.

    The sum X1 + X2 splits over the even and odd integers; each part is a
    Gaussian over a stretched lattice with its own normalising constant.
    Knots are parametrised by integer thresholds t on X1 + X2:

      alpha(t) = ce * sum_{i > t/2} e^{-i^2/s2} + co * sum_{i > (t-1)/2} e^{-(i+1/2)^2/s2}
      beta(t)  = ce * sum_{i <= t/2 - mu} e^{-i^2/s2} + co * sum_{i <= (t-1)/2 - mu} e^{-(i+1/2)^2/s2}

    with ce, co the even/odd lattice sums divided by the squared one-fold
    normaliser.
    """
    if mu != int(mu) or mu < 1:
        raise ValueError(f"shift mu must be a positive integer, got {mu}")
    mu = int(mu)
    sigma2 = mpf(sigma2)
    s0 = normalizer(0, sigma2)
    t_even, t_odd = even_odd_lattice_sums(sigma2)
    ce = t_even / s0**2
    co = t_odd / s0**2

    half_radius = sum_radius(sqrt(sigma2 / 2)) + mu
    idx = range(-half_radius, half_radius + 1)
    w_even = [exp(-mpf(i) ** 2 / sigma2) for i in idx]
    w_odd = [exp(-((mpf(i) + mpf(1) / 2) ** 2) / sigma2) for i in idx]
    # suffix[i] = sum of weights for indices >= i (as offsets into idx)
    def suffixes(w):
        out = [mpf(0)] * (len(w) + 1)
        for i in range(len(w) - 1, -1, -1):
            out[i] = out[i + 1] + w[i]
        return out

    suf_even, suf_odd = suffixes(w_even), suffixes(w_odd)
    total_even, total_odd = suf_even[0], suf_odd[0]

    def tail_from(suf, i_min):
        pos = min(max(i_min + half_radius, 0), len(suf) - 1)
        return suf[pos]

    points = [(mpf(0), mpf(1))]
    t_range = 2 * half_radius
    for t in range(t_range, -t_range - 1, -1):
        alpha = ce * tail_from(suf_even, t // 2 + 1)
        alpha += co * tail_from(suf_odd, (t - 1) // 2 + 1)
        beta = ce * (total_even - tail_from(suf_even, t // 2 - mu + 1))
        beta += co * (total_odd - tail_from(suf_odd, (t - 1) // 2 - mu + 1))
        points.append((clamp_probability(alpha), clamp_probability(beta)))
    points.append((mpf(1), mpf(0)))
    return TradeoffCurve(tuple(_dedupe_alpha(points)))


MAX_CONVOLUTION_FOLDS = 4


def convolution_pmf(n: int, sigma2):
    """Exact pmf of X1 + ... + Xn, Xi iid N_Z(0, s2), on its truncated support.

    Returns (offset, weights): P[sum = k] = weights[k - offset].  Each factor
    is truncated at 16 sigma, so the result is exact up to a dropped mass
    below 1e-55 per factor.  Refuses n > 4: the iterated convolution is
    O(n (32 sigma sqrt(n))^2), kept for oracle use only.
    """
    if n < 1 or n != int(n):
        raise ValueError(f"fold count must be a positive integer, got {n}")
    if n > MAX_CONVOLUTION_FOLDS:
        raise ValueError(
            f"exact convolution is limited to {MAX_CONVOLUTION_FOLDS} folds"
        )
    dist = DiscreteGaussian(sigma2)
    radius = int(mp.ceil(16 * dist.sigma))
    base = [dist.pmf(x) for x in range(-radius, radius + 1)]
    result = list(base)
    offset = -radius
    for _ in range(n - 1):
        out = [mpf(0)] * (len(result) + len(base) - 1)
        for i, a in enumerate(result):
            for j, b in enumerate(base):
                out[i + j] += a * b
        result = out
        offset -= radius
    return offset, result


def nfold_convolution_delta(n: int, sigma2, mu: int, eps) -> mpf:
    """Ground-truth delta(eps) for the n-fold iid composition, n <= 4.

    Computed from the exact convolution pmf and the privacy-loss tails:
    delta = P[W > s2 eps/mu - n mu/2] - e^eps P[W > s2 eps/mu + n mu/2]
    for W the centred sum.
    """
    if mu != int(mu) or mu < 1:
        raise ValueError(f"shift mu must be a positive integer, got {mu}")
    eps = mpf(eps)
    sigma2 = mpf(sigma2)
    offset, weights = convolution_pmf(n, sigma2)
    lo = sigma2 * eps / mu - mpf(n) * mu / 2
    hi = sigma2 * eps / mu + mpf(n) * mu / 2

    def tail(threshold):
        start = int(floor(threshold)) + 1
        pos = max(start - offset, 0)
        return sum(weights[pos:], mpf(0))

    return clamp_probability(tail(lo) - exp(eps) * tail(hi))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def parallel_min(curves) -> TradeoffCurve:
    """Pointwise minimum of trade-off curves, re-convexified.

    The largest convex minorant of the pointwise min equals the lower convex
    hull of the union of all knot sets, computed by a monotone chain.  This
    is the trade-off bound for mechanisms running on disjoint partitions of
    the data.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("parallel_min needs at least one curve")
    points = sorted({(a, b) for c in curves for a, b in c.knots})
    hull = []
    for p in points:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) <= 0:
            hull.pop()
        hull.append(p)
    return TradeoffCurve(tuple(_dedupe_alpha(hull)))


def curve_to_profile(curve: TradeoffCurve, eps) -> mpf:
    """delta(eps) = 1 + max over knots of (-e^eps alpha - beta), clamped.

    For a convex piecewise-linear curve the dual maximum is attained at a
    knot; ties resolve to the earlier knot without affecting the value.
    """
    eps = mpf(eps)
    e = exp(eps)
    best = max(-e * a - b for a, b in curve.knots)
    return clamp_probability(1 + best)


def profile_from_pllr(tail_up, tail_down, eps) -> mpf:
    """delta = tail_up - e^eps tail_down, clamped to [0, 1].

    ``tail_up`` and ``tail_down`` are P[privacy-loss > eps] under the
    alternative and the null, respectively.
    """
    tail_up = mpf(tail_up)
    tail_down = mpf(tail_down)
    for t in (tail_up, tail_down):
        if t < 0 or t > 1:
            raise ValueError("tail probabilities must lie in [0, 1]")
    return clamp_probability(tail_up - exp(mpf(eps)) * tail_down)
