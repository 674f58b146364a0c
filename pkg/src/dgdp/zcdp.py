"""Zero-concentrated DP baseline: the accounting the noise levels came from.

A discrete Gaussian mechanism with sensitivity D and variance proxy sigma^2
satisfies rho-zCDP with rho = D^2 / (2 sigma^2); budgets compose additively
and convert to (eps, delta)-DP through eps = rho + 2 sqrt(rho log(1/delta)).
These conversions give the comparison curves for the tighter accountant.
"""

from __future__ import annotations

from mpmath import exp, fsum, log, mpf, sqrt


def rho_of_dgm(sigma2, sensitivity=1) -> mpf:
    """zCDP budget of one discrete Gaussian mechanism."""
    sigma2 = mpf(sigma2)
    sensitivity = mpf(sensitivity)
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    return sensitivity**2 / (2 * sigma2)


def compose(budgets) -> mpf:
    """Total budget of sequentially composed mechanisms (additive)."""
    budgets = [mpf(b) for b in budgets]
    if any(b < 0 for b in budgets):
        raise ValueError("zCDP budgets must be nonnegative")
    return fsum(budgets) if budgets else mpf(0)


def eps_from_rho(rho, delta) -> mpf:
    """(eps, delta) point implied by rho-zCDP: eps = rho + 2 sqrt(rho ln(1/delta))."""
    rho = mpf(rho)
    delta = mpf(delta)
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if not (0 < delta < 1):
        raise ValueError("delta must lie in (0, 1)")
    return rho + 2 * sqrt(-rho * log(delta))


def delta_from_rho(rho, eps) -> mpf:
    """Inverse conversion: the delta this zCDP accounting assigns at eps."""
    rho = mpf(rho)
    eps = mpf(eps)
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if rho == 0:
        return mpf(0)
    if eps <= rho:
        return mpf(1)
    return min(mpf(1), exp(-((eps - rho) ** 2) / (4 * rho)))
