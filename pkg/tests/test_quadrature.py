from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from dlczsim.quadrature import (NonConvergenceWarning, PanelGrid, QuadratureSpec, Rule, composite_rule,
                                gauss_legendre, integrate_1d, integrate_nested, merge_edges)


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre(8)
    for k in range(16):
        exact = (1 - (-1) ** (k + 1)) / (k + 1)
        assert np.dot(w, x ** k) == pytest.approx(exact, abs=1e-14)


def test_composite_rule_integrates_smooth_function():
    x, w = composite_rule(np.linspace(0, math.pi, 5), 16)
    assert np.dot(w, np.sin(x)) == pytest.approx(2.0, abs=1e-14)


def test_panel_grid_truncated_weights_and_cumulative():
    g = PanelGrid(np.linspace(0.0, 2.0, 5), 12)
    f = np.exp(g.nodes)
    cuts = np.array([-1.0, 0.0, 0.3, 1.0, 1.77, 2.0, 5.0])
    got = g.cumulative(f, cuts)
    want = np.exp(np.clip(cuts, 0, 2)) - 1.0
    np.testing.assert_allclose(got, want, atol=1e-13)


def test_interpolation_reproduces_function():
    g = PanelGrid(np.linspace(-1.0, 1.0, 4), 16)
    x = np.linspace(-1, 1, 51)
    np.testing.assert_allclose(g.interpolate(np.cos(3 * g.nodes), x), np.cos(3 * x), atol=1e-12)


def test_refined_keeps_breakpoints():
    g = PanelGrid([0.0, 0.1, 1.0], 4).refined(2)
    assert set([0.0, 0.1, 1.0]) <= set(g.edges.tolist())
    assert g.n_panels == 4


def test_panel_grid_rejects_bad_edges():
    with pytest.raises(ValueError):
        PanelGrid([0.0, 0.0, 1.0])


def test_merge_edges_drops_near_duplicates():
    m = merge_edges([0.0, 1.0], [0.5, 1.0 + 1e-13])
    np.testing.assert_allclose(m, [0.0, 0.5, 1.0])


def test_integrate_1d_with_kink_at_breakpoint():
    res = integrate_1d(lambda x: np.abs(x - 0.3), (0.0, 1.0), breakpoints=[0.3])
    assert res.converged
    assert res.value == pytest.approx(0.5 * 0.09 + 0.5 * 0.49, abs=1e-12)


def test_integrate_1d_trapezoid_rule():
    res = integrate_1d(np.exp, (0.0, 1.0), QuadratureSpec(rule=Rule.TRAPEZOID, tol=1e-8, max_levels=20))
    assert res.value.real == pytest.approx(math.e - 1, rel=1e-7)


def test_integrate_1d_warns_on_non_convergence():
    spec = QuadratureSpec(tol=1e-10, max_levels=2, order=2)
    with pytest.warns(NonConvergenceWarning):
        res = integrate_1d(lambda x: np.sin(200 * x), (0.0, 1.0), spec)
    assert not res.converged


def test_integrate_nested_two_and_three_axes():
    r2 = integrate_nested(lambda x, y: np.exp(x + 2 * y), [(0, 1), (0, 1)])
    assert r2.value == pytest.approx((math.e - 1) * (math.exp(2) - 1) / 2, rel=1e-10)
    r3 = integrate_nested(lambda x, y, z: x * y * z, [(0, 1), (0, 2), (0, 3)])
    assert r3.value == pytest.approx(0.5 * 2 * 4.5, rel=1e-12)
    with pytest.raises(ValueError):
        integrate_nested(lambda x: x, [(0, 1)])


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(tol=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(max_levels=0)
