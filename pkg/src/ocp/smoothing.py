"""Smoothed projection onto [-1,1] and the implicit L1-penalty derivative d_eps.

P_eps is the square-root-shifted smoothing of the pointwise projection; d_eps is
the derivative of the smooth penalty that replaces the L1 norm, defined as the
unique fixed point of d = P_eps(d + ratio*x) with ratio = nu/mu, and D_eps its
antiderivative.  All functions are pure; everything vectorizes over x except the
fixed-point solvers, which are scalar (they serve objective diagnostics only).
"""

import numpy as np
from scipy import integrate


def projection(x):
    """Exact pointwise projection onto [-1, 1]."""
    return np.clip(x, -1.0, 1.0)


def smoothed_projection(x, eps):
    """P_eps(x) = (sqrt((x+1)^2 + eps) - sqrt((x-1)^2 + eps)) / 2.

    eps = 0 reproduces the exact projection; the formula is odd and strictly
    increasing in x for eps > 0, with values in [-1, 1].
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    x = np.asarray(x, dtype=float)
    if eps == 0.0:
        # sqrt of a square is off by an ulp; the exact projection keeps the
        # eps = 0 identities (band of exactly zero recovered control) exact
        return projection(x)
    return 0.5 * (np.sqrt((x + 1.0) ** 2 + eps) - np.sqrt((x - 1.0) ** 2 + eps))


def smoothed_projection_derivative(x, eps):
    """P'_eps(x), values in (0, 1/sqrt(1+eps)] with the maximum at x = 0.

    The smooth family only: eps = 0 is rejected (the projection has kinks).
    """
    if eps <= 0:
        raise ValueError("derivative of the smoothed projection needs eps > 0")
    x = np.asarray(x, dtype=float)
    return 0.5 * ((x + 1.0) / np.sqrt((x + 1.0) ** 2 + eps)
                  - (x - 1.0) / np.sqrt((x - 1.0) ** 2 + eps))


def projection_error_bound_check(x, eps):
    """Whether |proj(x) - P_eps(x)| <= sqrt(eps) holds (it always should)."""
    gap = np.abs(projection(x) - smoothed_projection(x, eps))
    return bool(np.all(gap <= np.sqrt(eps)))


def penalty_derivative(x, eps, ratio, tol=1e-13, max_sweeps=100):
    """Solve d = P_eps(d + ratio*x) for d in [-1, 1].

    Fixed-point iteration with Aitken extrapolation; the map is a contraction
    with factor 1/sqrt(1+eps), which nears 1 for small eps, so an unconditional
    bisection fallback on g(d) = d - P_eps(d + ratio*x) covers that regime
    (g is strictly increasing with 0 < g' <= 1 and changes sign on [-1, 1],
    hence |g(midpoint)| is bounded by the interval width).
    """
    if eps <= 0:
        raise ValueError("penalty derivative needs eps > 0")
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    shift = ratio * float(x)

    def step(d):
        return float(smoothed_projection(d + shift, eps))

    d = 0.0
    for _ in range(max_sweeps):
        d1 = step(d)
        d2 = step(d1)
        denom = d2 - 2.0 * d1 + d
        d_next = d2 if denom == 0.0 else d - (d1 - d) ** 2 / denom
        if not -1.0 <= d_next <= 1.0:
            d_next = d2
        d = d_next
        if abs(step(d) - d) <= tol:
            return d
    lo, hi = -1.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if mid - step(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    d = 0.5 * (lo + hi)
    if abs(step(d) - d) > tol:
        raise RuntimeError(f"penalty derivative did not reach tol={tol} at eps={eps}")
    return d


def penalty_derivative_slope(x, eps, ratio, tol=1e-13):
    """d'_eps(x) = ratio * P'_eps(z) / (1 - P'_eps(z)) at z = d_eps(x) + ratio*x."""
    d = penalty_derivative(x, eps, ratio, tol)
    pe = float(smoothed_projection_derivative(d + ratio * x, eps))
    return ratio * pe / (1.0 - pe)


def penalty_antiderivative(x, eps, ratio, quad_tol=1e-10):
    """D_eps(x) = integral of d_eps from 0 to x, by adaptive quadrature.

    Nonnegative, even, non-expansive; no closed form exists.
    """
    if quad_tol <= 0:
        raise ValueError("quad_tol must be positive")
    x = float(x)
    if x == 0.0:
        return 0.0
    inner_tol = min(0.01 * quad_tol, 1e-13)
    val, err = integrate.quad(
        lambda s: penalty_derivative(s, eps, ratio, tol=inner_tol),
        0.0, x, epsabs=0.5 * quad_tol, epsrel=1e-12, limit=200)
    # absolute-or-relative acceptance: large |x| gives large integrals whose
    # absolute quadrature estimate cannot reach quad_tol in double precision
    if err > max(quad_tol, quad_tol * abs(val)):
        raise RuntimeError(f"quadrature error estimate {err} above quad_tol={quad_tol}")
    # the integrand has the sign of s, so the result is nonnegative up to quadrature noise
    return val if val > 0.0 else 0.0
