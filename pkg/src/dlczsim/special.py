"""Modified Bessel functions I0 and I1 of real, non-negative argument.

Power series below ``SERIES_LIMIT``, Hankel asymptotic expansion above. The
scaled variants return ``exp(-x) I_n(x)`` and stay finite for any finite x.

The integral kernels of the write stage need I0 and I1 as entire functions of
the squared half-argument ``u = x**2 / 4``; :func:`i0_of_u` and
:func:`i1_ratio_of_u` provide that form and accept ``u < 0`` (where they turn
into J0 / J1), which product-integration weights rely on.
"""

from __future__ import annotations

import math

import numpy as np

SERIES_LIMIT = 15.0
_MAX_TERMS = 400


class DomainError(ValueError):
    pass


def _check(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("bessel_i requires a finite argument")
    if np.any(arr < 0):
        raise DomainError("bessel_i requires x >= 0")
    return arr


def _series_u(u: np.ndarray, n: int) -> np.ndarray:
    """sum_k u^k / (k! (k+n)!) for real u of either sign."""
    term = np.full(u.shape, 1.0 / math.factorial(n))
    total = term.copy()
    for k in range(1, _MAX_TERMS):
        term = term * u / (k * (k + n))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def _asymptotic_scaled(x: np.ndarray, n: int) -> np.ndarray:
    """exp(-x) I_n(x) from the Hankel expansion, for x >= SERIES_LIMIT."""
    mu = 4.0 * n * n
    term = np.ones_like(x)
    total = np.ones_like(x)
    last = np.full(x.shape, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, 60):
        term = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        mag = np.abs(term)
        # stop each point once the divergent tail starts growing
        active &= mag < last
        total = np.where(active, total + term, total)
        last = np.where(active, mag, last)
        if not active.any() or np.all(mag[active] <= 1e-17 * np.abs(total[active])):
            break
    return total / np.sqrt(2.0 * np.pi * x)


def bessel_i(n: int, x, scaled: bool = False):
    """I_n(x) for n in {0, 1}; ``scaled=True`` returns exp(-x) I_n(x)."""
    if n not in (0, 1):
        raise DomainError("only I0 and I1 are provided")
    arr = _check(x)
    scalar = arr.ndim == 0
    xs = np.atleast_1d(arr)
    out = np.empty_like(xs)
    low = xs < SERIES_LIMIT
    if low.any():
        xl = xs[low]
        val = _series_u(0.25 * xl * xl, n) * (0.5 * xl) ** n
        out[low] = val * np.exp(-xl) if scaled else val
    high = ~low
    if high.any():
        xh = xs[high]
        val = _asymptotic_scaled(xh, n)
        out[high] = val if scaled else val * np.exp(xh)
    return float(out[0]) if scalar else out


def i0_of_u(u) -> np.ndarray:
    """I0(2 sqrt(u)), continued to u < 0 as J0(2 sqrt(-u))."""
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape)
    big = u > 0.25 * SERIES_LIMIT ** 2
    out[~big] = _series_u(u[~big], 0)
    if big.any():
        out[big] = bessel_i(0, 2.0 * np.sqrt(u[big]))
    return out


def i1_ratio_of_u(u) -> np.ndarray:
    """I1(x) / (x/2) with x = 2 sqrt(u); equals 1 at u = 0, continued to u < 0."""
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape)
    big = u > 0.25 * SERIES_LIMIT ** 2
    out[~big] = _series_u(u[~big], 1)
    if big.any():
        x = 2.0 * np.sqrt(u[big])
        out[big] = bessel_i(1, x) / (0.5 * x)
    return out
