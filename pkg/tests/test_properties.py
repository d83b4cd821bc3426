from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from dlczsim.photon_stats import TmsvDetectorModel, click_probabilities, g2_conditional, g2_unconditional
from dlczsim.quadrature import PanelGrid
from dlczsim.units import Kind, format_quantity, parse_quantity
from dlczsim.waveform import Waveform, fwhm

probs = st.floats(1e-5, 0.3)
effs = st.floats(1e-3, 1.0)
darks = st.floats(0.0, 1e-2)


@given(st.floats(1e-15, 1e15), st.sampled_from([Kind.TIME, Kind.LENGTH, Kind.ANGULAR, Kind.RATE, Kind.SPEED]))
def test_quantity_round_trip(value, kind):
    assert parse_quantity(format_quantity(value, kind), kind) == value


@settings(max_examples=60, deadline=None)
@given(probs, st.integers(1, 3), effs, effs, effs, darks, darks, st.floats(0.1, 0.9))
def test_click_table_is_a_distribution(p, K, ew, e1, e2, dw, dr, split):
    m = TmsvDetectorModel(p, K, eta_w=ew, eta_r1=e1, eta_r2=e2, dark_w=dw, dark_r1=dr, dark_r2=dr, split=split)
    t = click_probabilities(m).table
    assert np.all(t >= -1e-18)
    assert abs(t.sum() - 1.0) < 1e-12


@settings(max_examples=60, deadline=None)
@given(probs, st.integers(1, 4), effs, darks)
def test_thermal_read_arm_bounds(p, K, er, dr):
    """Unheralded read light is thermal-like: 1 <= g2 <= 1 + 1/K."""
    m = TmsvDetectorModel.symmetric(p, K=K, eta_r=er, dark_r=dr)
    g = g2_unconditional(m)
    assert 1.0 - 1e-9 <= g <= 1.0 + 1.0 / K + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-5, 0.05), effs, effs)
def test_heralded_light_is_antibunched_at_low_p(p, ew, er):
    assert g2_conditional(TmsvDetectorModel.symmetric(p, eta_w=ew, eta_r=er)) < 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-9, 1e-3), st.floats(0.5, 3.0))
def test_fwhm_scales_with_time_axis(scale, width):
    t = np.linspace(-10.0, 10.0, 2001)
    y = np.exp(-0.5 * (t / width) ** 2)
    a = fwhm(Waveform(t, y, 1.0)).fwhm
    b = fwhm(Waveform(t * scale, y, 1.0)).fwhm
    assert abs(b - a * scale) <= 1e-9 * a * scale


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6), st.integers(2, 6))
def test_panel_grid_integrates_polynomials_exactly(coeffs, panels):
    g = PanelGrid(np.linspace(-1.0, 2.0, panels + 1), 4)
    poly = np.polynomial.Polynomial(coeffs)
    exact = poly.integ()(2.0) - poly.integ()(-1.0)
    assert abs(g.integrate(poly(g.nodes)) - exact) < 1e-11 * max(1.0, abs(exact), *map(abs, coeffs)) * 10
