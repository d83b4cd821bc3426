from __future__ import annotations

import numpy as np
import pytest
from oracles import fock_click_table as fock_oracle
from oracles import fock_g2 as _oracle_g2

from dlczsim.photon_stats import (DegenerateRatioError, NegativeEfficiencyWarning, TmsvDetectorModel,
                                  TruncationError, click_probabilities, dark_probability, g2_conditional,
                                  g2_unconditional, gate_width_scan, mode_probability,
                                  p_for_herald_probability, raw_retrieval_efficiency, required_n_max, scan_g2,
                                  total_photon_distribution)

MODELS = [
    TmsvDetectorModel.symmetric(0.01, eta_w=1e-3),
    TmsvDetectorModel.symmetric(0.05, eta_w=0.086, eta_r=0.3, dark_w=1e-4, dark_r=2e-4),
    TmsvDetectorModel(0.03, K=2, eta_w=0.2, eta_r1=0.5, eta_r2=0.4, dark_r1=1e-3, split=0.6),
    TmsvDetectorModel.symmetric(0.1, eta_w=0.5, eta_r=0.05),
]


@pytest.mark.parametrize("model", MODELS)
def test_click_table_matches_fock_oracle(model):
    got = click_probabilities(model).table
    want = np.array(fock_oracle(model), dtype=float)
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-18)
    assert got.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("model", MODELS)
def test_g2_matches_fock_oracle(model):
    t = fock_oracle(model)
    assert g2_conditional(model) == pytest.approx(_oracle_g2(t, True), rel=1e-8)
    assert g2_unconditional(model) == pytest.approx(_oracle_g2(t, False), rel=1e-8)


def test_heralded_g2_reference_point():
    m = TmsvDetectorModel.symmetric(0.01, eta_w=1e-3)
    g = g2_conditional(m)
    assert abs(g - _oracle_g2(fock_oracle(m), True)) < 1e-8
    assert g == pytest.approx(0.04, abs=2e-3)


@pytest.mark.parametrize("K,want", [(1, 2.0), (2, 1.5), (4, 1.25)])
def test_thermal_statistics_scale_as_one_plus_one_over_K(K, want):
    m = TmsvDetectorModel.symmetric(1e-4, K=K, eta_r=1e-3)
    assert g2_unconditional(m) == pytest.approx(want, abs=1e-6)


@pytest.mark.parametrize("eta", [0.01, 0.1, 0.5, 1.0])
def test_unconditional_g2_insensitive_to_efficiency(eta):
    assert g2_unconditional(TmsvDetectorModel.symmetric(1e-3, eta_r=eta)) == pytest.approx(2.0, abs=1e-3)


def test_dark_dominated_limit_is_uncorrelated():
    m = TmsvDetectorModel.symmetric(1e-4, eta_w=1e-3, eta_r=1e-4, dark_w=0.3, dark_r=0.3)
    assert g2_conditional(m) == pytest.approx(1.0, abs=1e-3)
    assert g2_unconditional(m) == pytest.approx(1.0, abs=1e-6)


def test_truncation_convergence():
    base = TmsvDetectorModel.symmetric(0.05, eta_w=0.1, eta_r=0.5)
    more = TmsvDetectorModel.symmetric(0.05, eta_w=0.1, eta_r=0.5, n_max=int(base.n_max * 1.5))
    assert g2_conditional(more) == pytest.approx(g2_conditional(base), rel=1e-12)


def test_explicit_truncation_below_tail_bound_is_rejected():
    with pytest.raises(TruncationError) as info:
        TmsvDetectorModel(0.5, n_max=3)
    assert info.value.suggested == required_n_max(0.5)


def test_total_distribution_is_normalised_convolution():
    m = TmsvDetectorModel(0.2, K=3)
    dist = total_photon_distribution(m)
    assert dist.sum() == pytest.approx(1.0)
    # negative binomial: mean number K q / (1 - q)
    q = m.q
    assert np.arange(dist.size) @ dist == pytest.approx(3 * q / (1 - q), rel=1e-10)


def test_swapped_detectors_give_same_g2():
    m = MODELS[2]
    assert g2_conditional(m.swapped()) == pytest.approx(g2_conditional(m), rel=1e-12)


@pytest.mark.parametrize("kwargs", [dict(p=1.0), dict(p=-0.1), dict(p=0.1, K=0), dict(p=0.1, eta_w=1.5),
                                    dict(p=0.1, dark_r1=1.0), dict(p=1 - 1e-12)])
def test_invalid_models(kwargs):
    with pytest.raises(ValueError):
        TmsvDetectorModel(**kwargs)


def test_degenerate_ratios():
    with pytest.raises(DegenerateRatioError):
        g2_conditional(TmsvDetectorModel.symmetric(0.1, eta_w=0.0))
    with pytest.raises(DegenerateRatioError):
        g2_unconditional(TmsvDetectorModel.symmetric(0.0))
    with pytest.raises(DegenerateRatioError):
        raw_retrieval_efficiency(0.1, 0.0, 0.0)


def test_raw_retrieval_efficiency():
    assert raw_retrieval_efficiency(0.02, 0.005, 0.1) == pytest.approx(0.15)
    with pytest.warns(NegativeEfficiencyWarning):
        assert raw_retrieval_efficiency(0.001, 0.005, 0.1) < 0
    with pytest.raises(ValueError):
        raw_retrieval_efficiency(1.2, 0.0, 0.1)


def test_helpers():
    assert dark_probability(130.0, 1e-6) == pytest.approx(1.3e-4, rel=1e-4)
    assert mode_probability(0.1, 1) == pytest.approx(0.1)
    q = mode_probability(0.1, 3)
    assert 3 * q / (1 - q) == pytest.approx(0.1 / 0.9)
    with pytest.raises(ValueError):
        dark_probability(-1.0, 1.0)


def test_herald_probability_inversion():
    p = p_for_herald_probability(0.0025, 0.086)
    m = TmsvDetectorModel(p, eta_w=0.086, eta_r1=0.0, eta_r2=0.0)
    assert click_probabilities(m).marginal("w") == pytest.approx(0.0025, rel=1e-10)
    with pytest.raises(ValueError):
        p_for_herald_probability(0.01, 0.1, dark_w=0.02)


def test_gate_width_scan_rises_with_dark_counts():
    p = p_for_herald_probability(0.0025, 0.086)
    base = TmsvDetectorModel.symmetric(p, eta_w=0.086, eta_r=0.5 * 0.12 * 0.086)
    gates = np.geomspace(30e-9, 30e-6, 8)
    scan = gate_width_scan(base, gates, 130.0)
    assert np.all(np.diff(scan.g2_cond) > 0)
    assert scan.g2_cond[0] < 0.5 < scan.g2_cond[-1] < 1.0
    lines = scan.to_csv().splitlines()
    assert lines[0] == "gate_width_s,g2_conditional,g2_unconditional,p_w"
    assert len(lines) == 9


def test_scan_g2_over_p():
    scan = scan_g2(TmsvDetectorModel.symmetric(0.001, eta_w=0.1), "p", [0.001, 0.01, 0.05])
    assert np.all(np.diff(scan.g2_cond) > 0)
    assert np.all(np.diff(scan.p_w) > 0)
