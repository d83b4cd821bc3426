from __future__ import annotations

import json
import math

import numpy as np
import pytest

from dlczsim.waveform import (CSV_COLUMNS, Waveform, WaveformError, classify_shape, count_peaks, fwhm, sidecar,
                              to_csv, write_waveform)


def _wave(t, y, **kw):
    return Waveform(t, y, float(np.trapezoid(y, t)), **kw)


def test_gaussian_fwhm():
    sigma = 100e-9
    t = np.linspace(-1e-6, 1e-6, 4001)
    w = _wave(t, np.exp(-0.5 * (t / sigma) ** 2))
    res = fwhm(w)
    assert res.fwhm == pytest.approx(2 * math.sqrt(2 * math.log(2)) * sigma, abs=0.5e-9)
    assert res.fwhm == pytest.approx(235.5e-9, abs=0.5e-9)
    assert not res.multi_peak and res.n_peaks == 1


def test_rectangle_fwhm():
    t = np.linspace(0.0, 10.0, 1001)
    y = ((t >= 3.0) & (t <= 6.0)).astype(float)
    assert fwhm(_wave(t, y)).fwhm == pytest.approx(3.0, abs=0.011)


def test_two_peaks_flagged():
    t = np.linspace(0, 10, 2001)
    y = np.exp(-(t - 3) ** 2 / 0.1) + 0.8 * np.exp(-(t - 7) ** 2 / 0.1)
    res = fwhm(_wave(t, y))
    assert res.multi_peak and res.n_peaks == 2
    assert res.left < 3 and res.right > 7
    assert count_peaks(y) == 2


def test_small_ripple_is_not_a_peak():
    t = np.linspace(0, 10, 2001)
    y = np.exp(-(t - 5) ** 2) + 0.05 * np.sin(20 * t) ** 2 * np.exp(-(t - 5) ** 2)
    assert count_peaks(y) == 1


@pytest.mark.parametrize("y", [np.zeros(11), np.ones(11)])
def test_flat_or_zero_waveform_errors(y):
    with pytest.raises(WaveformError):
        fwhm(_wave(np.arange(11.0), y))


def test_noise_floor_and_truncated_edges():
    t = np.arange(11.0)
    y = np.exp(-(t - 5) ** 2 / 4)
    with pytest.raises(WaveformError):
        fwhm(_wave(t, y), noise_floor=0.2)
    with pytest.raises(WaveformError):
        fwhm(_wave(t, np.linspace(1.0, 0.0, 11)))


def test_invalid_construction():
    with pytest.raises(WaveformError):
        Waveform(np.array([0.0, 0.0]), np.array([1.0, 2.0]), 1.0)
    with pytest.raises(WaveformError):
        Waveform(np.array([0.0, 1.0]), np.array([1.0]), 1.0)


def test_shape_classes():
    t = np.linspace(0, 10, 4001)
    sym = np.exp(-(t - 5) ** 2)
    assert classify_shape(_wave(t, sym)).kind == "single-peak"
    rising = np.where(t < 6, np.exp((t - 6) / 1.0), np.exp(-(t - 6) / 0.05))
    s = classify_shape(_wave(t, rising))
    assert s.kind == "rising-cutoff" and s.fall < 0.5 * s.rise
    two = np.exp(-(t - 3) ** 2 / 0.2) + np.exp(-(t - 7) ** 2 / 0.2)
    s = classify_shape(_wave(t, two))
    assert s.kind == "multi-peak" and s.n_peaks == 2
    assert s.peak_areas[0] == pytest.approx(s.peak_areas[1], rel=1e-3)


def test_csv_and_sidecar(tmp_path):
    t = np.linspace(0, 1e-6, 101)
    w = _wave(t, np.exp(-((t - 5e-7) / 1e-7) ** 2), scenario_hash="abc", eta_cond=0.5, eta_fiber=0.6)
    lines = to_csv(w).splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 102
    assert float(lines[1].split(",")[0]) == t[0]
    side = sidecar(w, {"extra": 1})
    assert side["scenario_hash"] == "abc" and side["extra"] == 1 and side["fwhm_s"] > 0
    csv_path, json_path = write_waveform(w, tmp_path / "w")
    assert csv_path.read_text() == to_csv(w)
    assert json.loads(json_path.read_text())["grid"]["n_samples"] == 101
