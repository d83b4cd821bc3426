from __future__ import annotations

import itertools

import numpy as np
import pytest
from oracles import fock_field_matrices, isserlis, random_linear_fields

from dlczsim.correlators import (ContractionCache, CorrelatorError, DiscreteAxis, FieldExpansion, InputKind,
                                 InputSpace, Term, conditional_efficiency, conditional_flux,
                                 conditional_flux_moment, flux_components, pairing_structure, two_point,
                                 wick_fourth_moment, write_stage)
from dlczsim.figures import low_gain
from dlczsim.params import EnsembleParams, PulseEnvelope


def test_wick_engine_equals_isserlis_on_100_random_covariances():
    rng = np.random.default_rng(20240611)
    worst = 0.0
    for _ in range(100):
        space, (a, b, c, d), _ = random_linear_fields(rng, int(rng.integers(1, 6)))
        fields = (a, b, c, d)
        cov = np.zeros((4, 4), dtype=complex)
        for i, j in itertools.combinations(range(4), 2):
            cov[i, j] = two_point(fields[i], fields[j]).value[0, 0]
        want = isserlis(cov)
        got = wick_fourth_moment(a, b, c, d).value[0, 0]
        worst = max(worst, abs(got - want) / max(abs(want), 1.0))
    assert worst < 1e-12


def test_isserlis_against_fock_space_brute_force():
    """Independent check of the two-point rule and the pairing sum on a truncated Fock space."""
    rng = np.random.default_rng(7)
    for _ in range(20):
        n_modes = 2
        space, fields, coeffs = random_linear_fields(rng, n_modes)
        rho = space.density
        # <a a^+> = rho: vacuum modes b rescaled as a = sqrt(rho) b
        mats = fock_field_matrices(coeffs, rho, cutoff=5)
        vac = np.zeros(mats[0].shape[0])
        vac[0] = 1.0
        brute4 = vac @ mats[0] @ mats[1] @ mats[2] @ mats[3] @ vac
        engine4 = wick_fourth_moment(*fields).value[0, 0]
        assert engine4 == pytest.approx(brute4, rel=1e-12, abs=1e-12)
        brute2 = vac @ mats[0] @ mats[1] @ vac
        assert two_point(fields[0], fields[1]).value[0, 0] == pytest.approx(brute2, rel=1e-12, abs=1e-12)


def test_contraction_rules():
    space = InputSpace(InputKind.INITIAL_SPIN, (DiscreteAxis(3),), 2.0)
    ann = Term("x", space, False, np.ones((1, 3)))
    cache = ContractionCache()
    assert cache.get(ann.adjoint(), ann) is None          # normally ordered vacuum moment vanishes
    assert cache.get(ann, ann.adjoint())[0, 0] == pytest.approx(6.0)
    assert ann.adjoint().adjoint() is ann
    other = InputSpace(InputKind.WRITE_NOISE, (DiscreteAxis(3),), 1.0)
    assert cache.get(ann, Term("y", other, True, np.ones((1, 3)))) is None


def test_fourth_moment_shape_mismatch():
    space = InputSpace(InputKind.VACUUM_WRITE, (DiscreteAxis(2),), 1.0)
    one = FieldExpansion("x", 1, (Term("x", space, False, np.ones((1, 2))),))
    two = FieldExpansion("y", 2, (Term("y", space, False, np.ones((2, 2))),))
    with pytest.raises(CorrelatorError):
        wick_fourth_moment(one, one, one, two)


# ---------------------------------------------------------------------------
# physical write/read stage


def test_pairing_structure_of_write_moment(figS1):
    ws = write_stage(figS1)
    s = pairing_structure(ws.write_field.dagger(), ws.spinwave, ws.spinwave.dagger(), ws.write_field)
    assert s.n_classes == 12
    assert s.n_noise_classes == 3
    assert s.n_products == 18


def test_wick_equals_factorised_flux(figS1):
    res, comp = conditional_flux_moment(figS1)
    ws = write_stage(figS1)
    ens = figS1.ensemble
    wick = (ens.c / ens.length_L) * np.real(ws.ctx.time.weights @ res.value) / ws.heralds
    np.testing.assert_allclose(wick, comp.total, rtol=1e-10, atol=1e-12 * comp.total.max())


def test_spin_bookkeeping(figS1):
    """Spin excitations at the write end equal emitted write photons weighted by their decay."""
    ws = write_stage(figS1)
    ctx = ws.ctx
    n_spin = float(np.real(ctx.medium.weights @ np.diag(ws.spin_population))) / ctx.L
    decay = np.exp(-2.0 * np.real(ctx.Gamma_xi - ctx.Gamma_nodes))
    n_photon = float(ctx.time.weights @ (ctx.c / ctx.L * ws.write_flux * decay))
    assert n_spin == pytest.approx(n_photon, rel=1e-8)
    assert n_spin > 0


def test_no_read_drive_gives_no_flux(figS1):
    sc = figS1.replace(read_pulse=figS1.read_pulse.with_peak(0.0))
    comp = flux_components(sc)
    assert not comp.total.any()
    assert conditional_efficiency(sc).eta_cond == 0.0


def test_no_write_drive_is_an_error(figS1):
    sc = figS1.replace(write_pulse=PulseEnvelope.zero(figS1.write_pulse.span))
    with pytest.raises(CorrelatorError):
        flux_components(sc)


def test_write_emission_scales_as_inverse_detuning_squared(figS1):
    sc = low_gain(figS1, 1e-2)
    ens = sc.ensemble
    far = sc.replace(ensemble=EnsembleParams(ens.d_w_bar, ens.d_r_bar, 2 * ens.delta, gamma_0=ens.gamma_0))
    ratio = write_stage(far).heralds / write_stage(sc).heralds
    assert ratio == pytest.approx(0.25, rel=2e-2)


def test_flux_integral_equals_efficiency(figS1):
    w = conditional_flux(figS1)
    assert float(w.weights @ w.flux) == pytest.approx(w.total_efficiency, rel=1e-12)
    assert w.eta_cond == pytest.approx(w.total_efficiency / figS1.detection.eta_fiber)
    assert np.all(w.flux >= 0)


def test_flux_is_linear_in_write_pulse_energy_at_low_gain(figS1):
    a = conditional_efficiency(low_gain(figS1, 1e-1)).eta_cond
    b = conditional_efficiency(low_gain(figS1, 1e-2)).eta_cond
    assert a == pytest.approx(b, rel=5e-3)


def test_grid_refinement_is_stable(figS1):
    e = conditional_efficiency(figS1, estimate_error=True)
    assert e.error < 1e-3 * e.eta_cond
