"""Extended-precision numeric kernel.

Everything downstream (distribution sums, privacy profiles, the composition
pipeline) is built on three primitives kept deliberately small and auditable:

* ``theta3_ratio`` -- ratios of one-dimensional theta series, the closed form
  of lattice-Gaussian characteristic functions under Poisson summation;
* ``gaussian_tail_upper`` -- the elementary bound
  ``int_x^inf exp(-s^2/2) ds <= exp(-x^2/2)/x``;
* ``boole_integrate`` -- composite Boole quadrature (weights 7,32,12,32,7)
  with the certified error term ``(2/945) * M6 * h^6 * (b - a)``.

All arithmetic runs on mpmath real numbers at a process-wide precision of
``mp.dps`` significant decimal digits, configured once via
``configure_precision`` before any computation starts (default 80).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from mpmath import cos_sin, exp, mp, mpf, pi, sqrt

DEFAULT_DIGITS = 80
PRECISION_ENV_VAR = "ACCOUNTANT_PRECISION"

# Hard cap on theta-series terms; the series in use converge in a handful of
# terms, so hitting the cap signals a pathological (q ~ 1) input.
THETA_MAX_TERMS = 10_000


def configure_precision(digits: int | None = None) -> int:
    """Fix the process-wide working precision in decimal digits.

    When ``digits`` is None the value is read from the environment variable
    ``ACCOUNTANT_PRECISION`` and falls back to DEFAULT_DIGITS.  Must be called
    before accountant computations; results are only comparable across runs
    at equal precision.
    """
    if digits is None:
        digits = int(os.environ.get(PRECISION_ENV_VAR, DEFAULT_DIGITS))
    digits = int(digits)
    if digits < 15:
        raise ValueError(f"working precision must be >= 15 digits, got {digits}")
    mp.dps = digits
    return digits


def precision() -> int:
    """Current working precision in decimal digits."""
    return mp.dps


def series_cutoff(extra: int = 10):
    """Relative truncation threshold 10**-(dps + extra) for series tails."""
    return mpf(10) ** (-(mp.dps + extra))


def normal_density(x) -> mpf:
    """Standard normal density exp(-x^2/2)/sqrt(2 pi)."""
    x = mpf(x)
    return exp(-x * x / 2) / sqrt(2 * pi)


def theta3_ratio(x, q, tol=None, with_index: bool = False):
    """Ratio (sum_k q^{k^2} e^{2kx}) / (sum_k q^{k^2}), k over all integers.

    This equals theta3(-i*x, q)/theta3(0, q) for the theta function
    theta3(u, q) = 1 + 2*sum_{k>=1} q^{k^2} cos(2ku), and is >= 1 for any
    real x (strictly increasing in |x|).  Both series are truncated at the
    first index whose term falls below ``tol`` times the running sum, after
    the terms have started decreasing; the truncation error is then bounded
    by a geometric tail and is below tol * result.

    ``with_index=True`` additionally returns the last summed index.
    """
    x = mpf(x)
    q = mpf(q)
    if not (0 < q < 1):
        raise ValueError(f"theta series requires q in (0, 1), got {q}")
    if tol is None:
        tol = series_cutoff()
    else:
        tol = mpf(tol)
        if tol <= 0:
            raise ValueError("tol must be positive")

    num = mpf(1)
    den = mpf(1)
    prev_term = None
    used = 0
    for k in range(1, THETA_MAX_TERMS + 1):
        qk = q ** (k * k)
        term_num = qk * (exp(2 * k * x) + exp(-2 * k * x))
        term_den = 2 * qk
        num += term_num
        den += term_den
        used = k
        decreasing = prev_term is not None and term_num < prev_term
        if decreasing and term_num <= tol * num and term_den <= tol * den:
            break
        prev_term = term_num
    else:
        raise ValueError(
            f"theta series did not converge within {THETA_MAX_TERMS} terms "
            f"(x={x}, q={q})"
        )
    ratio = num / den
    return (ratio, used) if with_index else ratio


def gaussian_tail_upper(x) -> mpf:
    """Upper bound (1/x) e^{-x^2/2} on the unnormalised Gaussian tail integral.

    Bounds ``int_x^inf exp(-s^2/2) ds`` for x > 0; monotone decreasing in x.
    """
    x = mpf(x)
    if x <= 0:
        raise ValueError(f"gaussian_tail_upper requires x > 0, got {x}")
    return exp(-x * x / 2) / x


@dataclass(frozen=True)
class BooleQuadratureSpec:
    """Uniform grid for composite Boole quadrature on [a, b].

    ``n_points - 1`` must be divisible by 4 (each panel spans four steps).
    """

    a: mpf
    b: mpf
    n_points: int

    def __post_init__(self):
        object.__setattr__(self, "a", mpf(self.a))
        object.__setattr__(self, "b", mpf(self.b))
        if self.n_points < 5:
            raise ValueError(f"need at least 5 points, got {self.n_points}")
        if (self.n_points - 1) % 4 != 0:
            raise ValueError(
                f"n_points - 1 must be divisible by 4, got {self.n_points}"
            )
        if not self.b > self.a:
            raise ValueError("empty integration interval")

    @property
    def h(self) -> mpf:
        return (self.b - self.a) / (self.n_points - 1)

    @property
    def panels(self) -> int:
        return (self.n_points - 1) // 4


def boole_error_bound(spec: BooleQuadratureSpec, m6) -> mpf:
    """Certified quadrature error (2/945) * m6 * h^6 * (b - a).

    ``m6`` must be a proven upper bound on sup |f^(6)| over [a, b]; the
    caller is responsible for its rigor.
    """
    m6 = mpf(m6)
    if m6 < 0:
        raise ValueError("m6 must be nonnegative")
    h = spec.h
    return mpf(2) / 945 * m6 * h**6 * (spec.b - spec.a)


def boole_integrate(f, spec: BooleQuadratureSpec, m6):
    """Composite Boole rule; returns (value, certified_error).

    value = sum over panels of (2h/45) (7 f0 + 32 f1 + 12 f2 + 32 f3 + 7 f4)
    with shared panel endpoints evaluated once.  Nodes are accumulated in
    ascending index order, so repeated runs are bit-identical.
    """
    a, h, n = spec.a, spec.h, spec.n_points
    total = mpf(0)
    for i in range(n):
        fi = f(a + i * h)
        if not fi:
            continue
        r = i % 4
        if r == 2:
            w = 12
        elif r != 0:
            w = 32
        elif i == 0 or i == n - 1:
            w = 7
        else:
            w = 14  # interior panel boundary, counted by both panels
        total += w * fi
    value = 2 * h / 45 * total
    return value, boole_error_bound(spec, m6)


def dirichlet_cos_sum(m_lo: int, m_hi: int, t) -> mpf:
    """sum_{m=m_lo}^{m_hi} cos(m t), in closed form.

    Uses the identity
    2*sum = cos(m_lo t) + cos(m_hi t) + cot(t/2) (sin(m_hi t) - sin(m_lo t)),
    valid for any integers m_lo <= m_hi and t not a multiple of 2 pi; at
    t == 0 the limit m_hi - m_lo + 1 is returned.
    """
    if m_hi < m_lo:
        return mpf(0)
    t = mpf(t)
    if t == 0:
        return mpf(m_hi - m_lo + 1)
    c_lo, s_lo = cos_sin(m_lo * t)
    c_hi, s_hi = cos_sin(m_hi * t)
    c_h, s_h = cos_sin(t / 2)
    return (c_lo + c_hi + c_h / s_h * (s_hi - s_lo)) / 2


def clamp_probability(x) -> mpf:
    """Clamp to [0, 1]; extended precision can leave -1e-79 scale artifacts."""
    x = mpf(x)
    if x < 0:
        return mpf(0)
    if x > 1:
        return mpf(1)
    return x
