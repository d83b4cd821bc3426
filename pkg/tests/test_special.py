from __future__ import annotations

import mpmath
import numpy as np
import pytest

from dlczsim.special import DomainError, bessel_i, i0_of_u, i1_ratio_of_u

mpmath.mp.dps = 40

XS = np.concatenate([[0.0, 1e-8, 1e-3, 0.5], np.linspace(1.0, 14.99, 25), np.linspace(15.0, 600.0, 40)])


def _oracle(n: int, x: float, scaled: bool) -> float:
    val = mpmath.besseli(n, x)
    if scaled:
        val *= mpmath.exp(-x)
    return float(val)


@pytest.mark.parametrize("n", [0, 1])
@pytest.mark.parametrize("scaled", [False, True])
def test_bessel_matches_arbitrary_precision(n, scaled):
    xs = XS if scaled else XS[XS < 700]
    got = bessel_i(n, xs, scaled=scaled)
    want = np.array([_oracle(n, x, scaled) for x in xs])
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-300)


def test_bessel_scalar_and_known_values():
    assert bessel_i(0, 0.0) == 1.0
    assert bessel_i(1, 0.0) == 0.0
    assert isinstance(bessel_i(0, 2.0), float)


def test_scaled_stays_finite_for_large_argument():
    val = bessel_i(0, 1e5, scaled=True)
    assert np.isfinite(val)
    assert val == pytest.approx(1.0 / np.sqrt(2 * np.pi * 1e5), rel=1e-5)


@pytest.mark.parametrize("bad", [-1.0, np.nan, np.inf])
def test_domain_errors(bad):
    with pytest.raises(DomainError):
        bessel_i(0, bad)


def test_only_orders_zero_and_one():
    with pytest.raises(DomainError):
        bessel_i(2, 1.0)


def test_u_forms_against_series():
    us = np.array([-20.0, -1.0, 0.0, 1e-6, 0.3, 2.0, 40.0, 100.0])
    i0 = [float(mpmath.besselj(0, 2 * mpmath.sqrt(-u))) if u < 0 else float(mpmath.besseli(0, 2 * mpmath.sqrt(u)))
          for u in us]
    np.testing.assert_allclose(i0_of_u(us), i0, rtol=1e-10, atol=1e-14)

    def ratio(u):
        if u == 0:
            return 1.0
        if u < 0:
            x = 2 * mpmath.sqrt(-u)
            return float(mpmath.besselj(1, x) / (x / 2))
        x = 2 * mpmath.sqrt(u)
        return float(mpmath.besseli(1, x) / (x / 2))

    np.testing.assert_allclose(i1_ratio_of_u(us), [ratio(u) for u in us], rtol=1e-10, atol=1e-14)
