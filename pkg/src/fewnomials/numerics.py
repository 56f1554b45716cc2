"""Shared numerical kernels: log-gamma, stable log-sums, quadrature, 1-D search.

Everything here is deliberately dependency-free (numpy only).  The log-gamma
is a local Lanczos implementation so that norming constants are reproducible
bit-for-bit and testable against exact integer factorials.
"""
from __future__ import annotations

import math

import numpy as np

# Lanczos approximation, g = 7, 9 coefficients.  Relative error is below
# 1e-13 for real arguments x > 0, which is ample for the 1e-12 contract on
# log norming constants.
_LANCZOS_G = 7.0
_LANCZOS_C = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)


def log_gamma(x):
    """log Gamma(x) for real x > 0 (scalar or ndarray).

    Uses the Lanczos series directly; arguments below 0.5 go through the
    reflection formula.  Raises for non-positive input.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("log_gamma requires x > 0")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)

    small = x < 0.5
    if np.any(small):
        xs = x[small]
        # Gamma(x) Gamma(1-x) = pi / sin(pi x)
        out[small] = (
            math.log(math.pi)
            - np.log(np.sin(np.pi * xs))
            - _lanczos(1.0 - xs)
        )
    out[~small] = _lanczos(x[~small])
    return out[0] if scalar else out


def _lanczos(x):
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_C[0])
    for i in range(1, len(_LANCZOS_C)):
        acc = acc + _LANCZOS_C[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_TWO_PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def log_factorial(n):
    """log n! for integer n >= 0 (scalar or ndarray)."""
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("log_factorial requires n >= 0")
    return log_gamma(np.asarray(n, dtype=float) + 1.0)


def log_multinomial(n: int, alpha) -> np.ndarray:
    """log of the multinomial coefficient n! / ((n-|a|)! a_1! ... a_m!).

    `alpha` has shape (..., m) with nonnegative integer entries and
    |alpha| <= n along the last axis.
    """
    alpha = np.asarray(alpha)
    tail = n - alpha.sum(axis=-1)
    if np.any(alpha < 0) or np.any(tail < 0):
        raise ValueError("multinomial index out of range")
    return (
        log_factorial(n)
        - log_factorial(tail)
        - log_factorial(alpha).sum(axis=-1)
    )


def logsumexp(a, axis=None):
    """log sum exp along `axis`, safe for -inf entries and wide ranges."""
    a = np.asarray(a, dtype=float)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    out = np.log(np.sum(np.exp(a - amax), axis=axis)) + np.squeeze(amax, axis=axis)
    return out


def log1p_exp_sum(rho) -> np.ndarray:
    """log(1 + sum_j exp(rho_j)) along the last axis, overflow-safe.

    This is the Fubini-Study potential of the point z = e^{rho/2 + i theta};
    equals logsumexp of (0, rho_1, ..., rho_m).
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    zeros = np.zeros(rho.shape[:-1] + (1,))
    return logsumexp(np.concatenate([zeros, rho], axis=-1), axis=-1)


def gauss_legendre(n: int, a: float, b: float):
    """Gauss-Legendre nodes/weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-8, max_depth: int = 40) -> float:
    """Adaptive Simpson quadrature of a scalar function on [a, b]."""
    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return _simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + _simpson_rec(
        f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1
    )


def bisect_decreasing(f, lo, hi, target, iters: int = 60):
    """Solve f(x) = target for f decreasing on [lo, hi], vectorized.

    All of lo, hi, target may be ndarrays of a common shape.  Returns the
    midpoint after `iters` halvings (2^-60 of the bracket width).
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    target = np.asarray(target, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = f(mid) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


def maximize_concave(f, lo: float, hi: float, iters: int = 90) -> tuple[float, float]:
    """Golden-section maximizer for a concave f on [lo, hi].

    Returns (argmax, max).  90 iterations shrink the bracket below 1e-18
    of the initial width, so the argmax is resolved to ~1e-12 absolute on
    O(1) intervals.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def xlogx(x):
    """x log x with the continuous extension 0 log 0 = 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0.0, x * np.log(np.where(x > 0.0, x, 1.0)), 0.0)
    return out
