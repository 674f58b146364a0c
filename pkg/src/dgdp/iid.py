"""Privacy accountant for n-fold i.i.d. discrete Gaussian composition.

The normalised sum S_n = (X_1 + ... + X_n)/B_n, B_n = sqrt(n) sigma, has a
characteristic function in closed form,

    f(t) = e^{-t^2/2} * theta3_ratio(sigma pi t / sqrt(n), e^{-2 pi^2 sigma^2})^n,

so its pmf differs from the continuous Gaussian density 1/B_n phi(i/B_n) on
the lattice Z/B_n by a residual that Fourier inversion bounds rigorously.
``residual_bound`` certifies that sup-norm residual; ``delta_eps`` then
evaluates the privacy profile as two lattice sums of phi between privacy-loss
thresholds, carrying an itemised error ledger whose total certifies the
output.  ``eps_from_delta`` and ``sigma_from_budget`` invert the profile by
bisection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

from mpmath import exp, floor, fsum, log, mp, mpf, pi, sqrt

from . import zcdp
from .hp import clamp_probability, gaussian_tail_upper, normal_density, theta3_ratio


@dataclass(frozen=True)
class IidCompositionSpec:
    """n-fold composition of one level: fold count, variance proxy, shift."""

    n: int
    sigma2: mpf
    mu: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sigma2", mpf(self.sigma2))
        if self.n < 1 or self.n != int(self.n):
            raise ValueError(f"fold count must be a positive integer, got {self.n}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.mu < 1 or self.mu != int(self.mu):
            raise ValueError(f"sensitivity must be a positive integer, got {self.mu}")

    @property
    def b_n(self) -> mpf:
        return sqrt(self.n * self.sigma2)


@dataclass(frozen=True)
class ResidualBound:
    """Certified sup over the lattice of |P[S_n = y] - phi(y)/B_n|.

    omega1: unit-interval sums over [0, floor(pi B_n)] pairing the left
            maximum of e^{-t^2/2} with the right maximum of |ratio^n - 1|;
    omega2: endpoint sliver [floor(pi B_n), pi B_n] bounded by the
            characteristic-function value plus the Gaussian factor there;
    omega3: Gaussian tail beyond pi B_n.
    """

    n: int
    sigma2: mpf
    omega1: mpf
    omega2: mpf
    omega3: mpf

    @property
    def r(self) -> mpf:
        return self.omega1 + self.omega2 + self.omega3


@dataclass
class ErrorLedger:
    """Named nonnegative error terms whose sum certifies an estimate."""

    terms: dict = field(default_factory=dict)
    flagged: bool = False

    def add(self, name: str, value):
        value = mpf(value)
        if value < 0:
            raise ValueError(f"ledger term {name} must be nonnegative")
        if name in self.terms:
            raise ValueError(f"duplicate ledger term {name}")
        self.terms[name] = value

    @property
    def total(self) -> mpf:
        return fsum(self.terms.values()) if self.terms else mpf(0)

    def rows(self):
        return list(self.terms.items())


def char_fn(spec: IidCompositionSpec, t) -> mpf:
    """Characteristic function of S_n; even, equal to 1 at t = 0 and
    strictly decreasing on (0, pi B_n)."""
    t = abs(mpf(t))
    q = exp(-2 * pi**2 * spec.sigma2)
    ratio = theta3_ratio(sqrt(spec.sigma2) * pi * t / sqrt(spec.n), q)
    return exp(-t * t / 2) * ratio**spec.n


_residual_cache: dict = {}


def residual_bound(n: int, sigma2) -> ResidualBound:
    """Certified lattice residual for the n-fold composition.

    Valid for n >= 2; the bound degrades below sigma^2 = 1 (a warning is
    emitted there).  All three components are explicit upper bounds, so the
    total r is itself a rigorous bound.
    """
    sigma2 = mpf(sigma2)
    if n < 2 or n != int(n):
        raise ValueError(f"residual bound needs a fold count >= 2, got {n}")
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    if sigma2 < 1:
        warnings.warn(
            f"residual bound grows rapidly below sigma2 = 1 (got {sigma2})",
            stacklevel=2,
        )
    key = (int(n), sigma2, mp.dps)
    hit = _residual_cache.get(key)
    if hit is not None:
        return hit

    sigma = sqrt(sigma2)
    b_n = sqrt(n * sigma2)
    pi_b = pi * b_n
    j_max = int(floor(pi_b))
    q = exp(-2 * pi**2 * sigma2)

    # On [j-1, j] the Gaussian factor peaks at the left endpoint and the
    # theta-ratio factor at the right endpoint; their product bounds the
    # integrand over the whole unit interval.
    omega1 = fsum(
        exp(-mpf(j - 1) ** 2 / 2)
        * (theta3_ratio(sigma * pi * j / sqrt(n), q) ** n - 1)
        for j in range(1, j_max + 1)
    ) / pi_b

    gauss_end = exp(-mpf(j_max) ** 2 / 2)
    char_end = gauss_end * theta3_ratio(sigma * pi * j_max / sqrt(n), q) ** n
    omega2 = (pi_b - j_max) / pi_b * (char_end + gauss_end)

    omega3 = gaussian_tail_upper(pi_b) / pi_b

    out = ResidualBound(int(n), sigma2, omega1, omega2, omega3)
    _residual_cache[key] = out
    return out


def _lattice_range(spec: IidCompositionSpec, threshold, cap):
    """Integers i with i > threshold and i/B_n <= cap."""
    lo = int(floor(threshold)) + 1
    hi = int(floor(cap * spec.b_n))
    return lo, hi


TAIL_CAP = 20  # U-threshold: P[S_n > 20] <= e^{-200}, below every ledger term


def delta_eps(spec: IidCompositionSpec, eps, tolerance=None):
    """Privacy profile delta(eps) with its certifying ledger.

    delta = (1/B_n) sum phi(i/B_n) over s2*eps - n/2 < i <= U1*B_n
          - e^eps (1/B_n) sum phi(i/B_n) over s2*eps + n/2 < i <= U2*B_n,
    clamped to [0, 1], with U = max(20, threshold/B_n) capping each sum.
    The ledger holds, per sum: (lattice count) * residual r, plus the
    sub-Gaussian cap tail e^{-U^2/2}; shift-side terms are pre-multiplied by
    e^eps, so |true delta - delta| <= ledger.total.

    Implemented for unit sensitivity (the add/delete counting-query case).
    """
    if spec.mu != 1:
        raise ValueError("the lattice profile is implemented for sensitivity 1")
    eps = mpf(eps)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    b_n = spec.b_n
    r = residual_bound(spec.n, spec.sigma2).r

    thr_main = spec.sigma2 * eps - mpf(spec.n) / 2
    thr_shift = spec.sigma2 * eps + mpf(spec.n) / 2
    u_main = max(mpf(TAIL_CAP), thr_main / b_n)
    u_shift = max(mpf(TAIL_CAP), thr_shift / b_n)

    def lattice_sum(threshold, cap):
        lo, hi = _lattice_range(spec, threshold, cap)
        if hi < lo:
            return mpf(0), 0
        total = fsum(normal_density(mpf(i) / b_n) for i in range(lo, hi + 1))
        return total / b_n, hi - lo + 1

    main, count_main = lattice_sum(thr_main, u_main)
    shift, count_shift = lattice_sum(thr_shift, u_shift)
    scale = exp(eps)
    delta = clamp_probability(main - scale * shift)

    ledger = ErrorLedger()
    ledger.add("residual_main", count_main * r)
    ledger.add("cap_tail_main", exp(-u_main**2 / 2))
    ledger.add("residual_shift", scale * count_shift * r)
    ledger.add("cap_tail_shift", scale * exp(-u_shift**2 / 2))
    if tolerance is not None and ledger.total > mpf(tolerance):
        ledger.flagged = True
    return delta, ledger


class EpsSolution(NamedTuple):
    eps: mpf
    bracketed: bool
    delta: mpf


EPS_ABS_TOL = mpf("1e-4")
DELTA_REL_TOL = mpf("1e-3")


def eps_from_delta(spec: IidCompositionSpec, delta_target) -> EpsSolution:
    """Smallest eps with delta(eps) <= target, by bisection.

    Stops once the bracket is narrower than 1e-4 and the midpoint profile
    lies within +-1e-3 relative of the target.  The initial bracket is
    [0, 2 * zCDP eps]; if even delta(0) is below the target the solution is
    eps = 0, returned with ``bracketed=False``.
    """
    delta_target = mpf(delta_target)
    if not (0 < delta_target < 1):
        raise ValueError("delta target must lie in (0, 1)")
    d0, _ = delta_eps(spec, 0)
    if d0 <= delta_target:
        return EpsSolution(mpf(0), False, d0)
    rho = zcdp.compose([zcdp.rho_of_dgm(spec.sigma2, spec.mu)] * spec.n)
    hi = 2 * zcdp.eps_from_rho(rho, delta_target)
    lo = mpf(0)
    d_hi, _ = delta_eps(spec, hi)
    while d_hi > delta_target:  # defensive; the zCDP bound should dominate
        hi *= 2
        d_hi, _ = delta_eps(spec, hi)
    mid, d_mid = hi, d_hi
    for _ in range(300):
        mid = (lo + hi) / 2
        d_mid, _ = delta_eps(spec, mid)
        if d_mid > delta_target:
            lo = mid
        else:
            hi = mid
        close = abs(d_mid - delta_target) <= DELTA_REL_TOL * delta_target
        if hi - lo <= EPS_ABS_TOL and close:
            break
    return EpsSolution(mid, True, d_mid)


SIGMA2_REL_TOL = mpf("1e-3")


def sigma_from_budget(n: int, eps, delta, mu: int = 1) -> mpf:
    """Smallest variance proxy sigma^2 with delta(eps) <= delta, to 1e-3.

    Monotone bisection: more noise gives a smaller profile.  The zCDP noise
    level for the same budget is an upper starting point since this
    accountant is tighter.
    """
    eps = mpf(eps)
    delta = mpf(delta)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not (0 < delta < 1):
        raise ValueError("delta must lie in (0, 1)")
    # invert eps = rho + 2 sqrt(rho log(1/delta)) for the zCDP noise level
    log_inv = -log(delta)
    rho_z = (sqrt(log_inv + eps) - sqrt(log_inv)) ** 2
    hi = mpf(n) * mu * mu / (2 * rho_z)

    def ok(sigma2):
        d, _ = delta_eps(IidCompositionSpec(n, sigma2, mu), eps)
        return d <= delta

    while not ok(hi):  # defensive; zCDP noise always satisfies the budget
        hi *= 2
    lo = hi / 4
    while ok(lo):
        lo /= 2
    while hi - lo > SIGMA2_REL_TOL * hi:
        mid = (lo + hi) / 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
