"""Sampled photon waveforms, width analysis and file export."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

CSV_COLUMNS = ("time_s", "flux_per_s")


class WaveformError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    """Conditional photon flux sampled in time.

    ``weights`` are quadrature weights for the samples; they integrate the
    underlying interpolant exactly and define ``total_efficiency``. The
    trapezoid rule over the samples agrees with it to well below 1e-3.
    """

    times: np.ndarray
    flux: np.ndarray
    total_efficiency: float
    scenario_hash: str = ""
    weights: np.ndarray | None = None
    eta_cond: float = float("nan")
    eta_fiber: float = float("nan")
    warnings: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        f = np.asarray(self.flux, dtype=float)
        if t.ndim != 1 or t.shape != f.shape or t.size < 2:
            raise WaveformError("times and flux must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(t) <= 0):
            raise WaveformError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "flux", f)

    def trapezoid(self) -> float:
        return float(np.trapezoid(self.flux, self.times))

    @property
    def peak_time(self) -> float:
        return float(self.times[int(np.argmax(self.flux))])


@dataclass(frozen=True)
class WidthResult:
    fwhm: float
    left: float
    right: float
    multi_peak: bool
    n_peaks: int


def _crossing(t0, t1, y0, y1, level):
    if y1 == y0:
        return t0
    return t0 + (level - y0) * (t1 - t0) / (y1 - y0)


def count_peaks(flux: np.ndarray, prominence: float = 0.2) -> int:
    """Local maxima whose height above the deeper neighbouring valley exceeds
    ``prominence`` times the global maximum."""
    y = np.asarray(flux, dtype=float)
    top = y.max()
    if top <= 0:
        return 0
    peaks = 0
    # walk the sequence of alternating extrema with hysteresis
    last_min = y[0]
    last_max = -np.inf
    rising = True
    for v in y:
        if rising:
            if v > last_max:
                last_max = v
            elif last_max - v > prominence * top:
                if last_max - last_min > prominence * top:
                    peaks += 1
                rising = False
                last_min = v
        else:
            if v < last_min:
                last_min = v
            elif v - last_min > prominence * top:
                rising = True
                last_max = v
    if rising and last_max - last_min > prominence * top:
        peaks += 1
    return max(peaks, 1)


def fwhm(w: Waveform, noise_floor: float = 0.0) -> WidthResult:
    """Full width at half maximum with linear interpolation of the crossings.

    For several peaks the width spans the outermost half-maximum crossings
    and ``multi_peak`` is set.

    Raises
    ------
    WaveformError
        If the waveform is flat, all zero, or its maximum is not above ten
        times ``noise_floor``; or if a half-maximum crossing is missing.
    """
    t, y = w.times, w.flux
    top = float(y.max())
    if not top > 0 or top <= 10.0 * noise_floor or np.allclose(y, top):
        raise WaveformError("no half-maximum crossing: waveform is flat or zero")
    half = 0.5 * top
    above = np.nonzero(y >= half)[0]
    i0, i1 = int(above[0]), int(above[-1])
    if i0 == 0:
        if y[0] > half:
            raise WaveformError("waveform does not rise from below half maximum after the first sample")
        left = t[0]
    else:
        left = _crossing(t[i0 - 1], t[i0], y[i0 - 1], y[i0], half)
    if i1 == y.size - 1:
        if y[-1] > half:
            raise WaveformError("waveform does not fall to half maximum after the last sample")
        right = t[-1]
    else:
        right = _crossing(t[i1], t[i1 + 1], y[i1], y[i1 + 1], half)
    n = count_peaks(y)
    return WidthResult(float(right - left), float(left), float(right), n > 1, n)


@dataclass(frozen=True)
class ShapeSummary:
    """Qualitative class of a waveform.

    ``rise`` is the time from the last 10 % crossing before the global
    maximum to the maximum, ``fall`` the time from the maximum to the first
    10 % crossing after it; ``peak_areas`` are the areas between the valleys
    separating the peaks (one entry for a single peak).
    """

    kind: str                     # "single-peak" | "rising-cutoff" | "multi-peak"
    n_peaks: int
    rise: float
    fall: float
    peak_areas: tuple[float, ...]


def _edge_times(t: np.ndarray, y: np.ndarray, level: float) -> tuple[float, float]:
    k = int(np.argmax(y))
    below_before = np.nonzero(y[:k] < level)[0]
    below_after = np.nonzero(y[k:] < level)[0]
    if below_before.size:
        j = int(below_before[-1])
        t_rise = _crossing(t[j], t[j + 1], y[j], y[j + 1], level)
    else:
        t_rise = t[0]
    if below_after.size:
        j = k + int(below_after[0])
        t_fall = _crossing(t[j - 1], t[j], y[j - 1], y[j], level)
    else:
        t_fall = t[-1]
    return float(t[k] - t_rise), float(t_fall - t[k])


def _valleys(y: np.ndarray, prominence: float) -> list[int]:
    """Indices of the minima separating peaks found by :func:`count_peaks`."""
    top = y.max()
    out = []
    last_max, last_min, i_min = -np.inf, y[0], 0
    rising = True
    for i, v in enumerate(y):
        if rising:
            if v > last_max:
                last_max = v
            elif last_max - v > prominence * top:
                rising, last_min, i_min = False, v, i
        else:
            if v < last_min:
                last_min, i_min = v, i
            elif v - last_min > prominence * top:
                out.append(i_min)
                rising, last_max = True, v
    return out


def classify_shape(w: Waveform, asymmetry: float = 0.5, prominence: float = 0.2) -> ShapeSummary:
    """Single peak, rising-then-cutoff (fall shorter than ``asymmetry`` times
    the rise) or multi-peak."""
    t, y = w.times, w.flux
    if not y.max() > 0:
        raise WaveformError("waveform is zero")
    n = count_peaks(y, prominence)
    rise, fall = _edge_times(t, y, 0.1 * y.max())
    cuts = [0] + _valleys(y, prominence) + [y.size - 1]
    weights = w.weights if w.weights is not None else None
    areas = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if weights is not None:
            areas.append(float(weights[a:b] @ y[a:b]))
        else:
            areas.append(float(np.trapezoid(y[a:b + 1], t[a:b + 1])))
    if n >= 2:
        kind = "multi-peak"
    elif fall < asymmetry * rise:
        kind = "rising-cutoff"
    else:
        kind = "single-peak"
    return ShapeSummary(kind, n, rise, fall, tuple(areas))


def to_csv(w: Waveform) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for ti, fi in zip(w.times, w.flux):
        writer.writerow([repr(float(ti)), repr(float(fi))])
    return buf.getvalue()


def sidecar(w: Waveform, extra: dict | None = None) -> dict:
    try:
        width = fwhm(w)
        width_d = {"fwhm_s": width.fwhm, "multi_peak": width.multi_peak, "n_peaks": width.n_peaks}
    except WaveformError as exc:
        width_d = {"fwhm_s": None, "fwhm_error": str(exc)}
    out = {
        "tool_version": __version__,
        "scenario_hash": w.scenario_hash,
        "eta_cond": w.eta_cond,
        "eta_fiber_coupled": w.total_efficiency,
        "eta_fiber": w.eta_fiber,
        **width_d,
        "grid": {"t_start_s": float(w.times[0]), "t_end_s": float(w.times[-1]), "n_samples": int(w.times.size)},
        "warnings": list(w.warnings),
        "columns": list(CSV_COLUMNS),
    }
    out.update(w.metadata)
    if extra:
        out.update(extra)
    return out


def write_waveform(w: Waveform, path: str | Path, extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``<path>.csv`` and ``<path>.json``."""
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    json_path = path.with_suffix(".json")
    csv_path.write_text(to_csv(w))
    json_path.write_text(json.dumps(sidecar(w, extra), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path
