"""Parameter scans, read-power optimisation and read-pulse power policies.

In the adiabatic read-out the retrieval depends on the read pulse mainly
through its total sweep ``Y = c Delta_tau(t_end, xi)``, which is
proportional to ``Omega_bar_R^2``. :func:`peak_for_sweep` inverts that
relation and lets scans compare pulses of different shapes or durations at
equal sweep.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .config import scenario_hash
from .correlators import CorrelatorError, conditional_flux
from .kernels import build_read_context
from .params import PulseEnvelope, PulseFamily, Scenario
from .waveform import Waveform, WaveformError, fwhm

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ScanError(ValueError):
    pass


# ---------------------------------------------------------------------------
# read-pulse helpers


def unit_sweep(scenario: Scenario) -> float:
    """Total read sweep for a read pulse of unit peak ``Omega_bar``."""
    sc = scenario.replace(read_pulse=scenario.read_pulse.with_peak(1.0))
    rctx = build_read_context(sc)
    return rctx.total_sweep


def peak_for_sweep(scenario: Scenario, sweep: float) -> float:
    """Peak ``Omega_bar_R`` whose total read sweep equals ``sweep`` (metres)."""
    if sweep < 0:
        raise ValueError("sweep must be >= 0")
    y1 = unit_sweep(scenario)
    if y1 <= 0:
        raise ValueError("read pulse has no weight inside the read window")
    return math.sqrt(sweep / y1)


def with_sweep(scenario: Scenario, sweep: float) -> Scenario:
    """``scenario`` with the read power set to a total sweep of ``sweep``."""
    return scenario.replace(read_pulse=scenario.read_pulse.with_peak(peak_for_sweep(scenario, sweep)))


def pulse_with_duration(pulse: PulseEnvelope, duration: float) -> PulseEnvelope:
    """The same pulse family stretched to intensity FWHM ``duration`` (peak kept).

    Gaussian pulses keep their support in FWHM units; a rising exponential
    gets ``width_1e = duration / ln 2``; double-Gaussian and tabulated
    pulses are rescaled in time as a whole.
    """
    if not duration > 0:
        raise ValueError(f"duration must be > 0, got {duration!r}")
    fam = pulse.family
    if fam is PulseFamily.GAUSSIAN:
        support = (pulse.center - pulse.t_start) / pulse.fwhm
        return PulseEnvelope.gaussian(pulse.peak_rabi_bar, duration, support)
    if fam is PulseFamily.RISING_EXPONENTIAL:
        span = (pulse.t_end - pulse.t_start) / pulse.width_1e
        return PulseEnvelope.rising_exponential(pulse.peak_rabi_bar, duration / math.log(2.0), span)
    k = duration / pulse.duration
    if fam is PulseFamily.DOUBLE_GAUSSIAN:
        return replace(pulse, t_start=pulse.t_start * k, t_end=pulse.t_end * k, fwhm=pulse.fwhm * k,
                       fwhm2=pulse.fwhm2 * k, center=pulse.center * k, separation=pulse.separation * k)
    return PulseEnvelope.tabulated(pulse.peak_rabi_bar, [t * k for t in pulse.table_times], pulse.table_values)


def efficiency_of(scenario: Scenario, refine: int = 1) -> float:
    """Conditional efficiency ``eta_{r|w}`` (no fiber factor), warnings silenced."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return conditional_flux(scenario, refine).eta_cond


# ---------------------------------------------------------------------------
# read-power optimisation


@dataclass(frozen=True)
class PowerOptimum:
    """Result of :func:`optimize_read_power`.

    ``curve_rabi_bar``/``curve_efficiency`` hold the coarse log-spaced scan;
    ``evaluations`` every (Omega_bar, eta_cond) pair computed, in order.
    """

    best_rabi_bar: float
    best_efficiency: float
    curve_rabi_bar: np.ndarray
    curve_efficiency: np.ndarray
    non_unimodal: bool
    n_local_maxima: int
    monotone: bool
    evaluations: tuple[tuple[float, float], ...] = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["rabi_bar_rad_per_s", "rabi_over_2pi_hz", "eta_cond"])
        for x, y in zip(self.curve_rabi_bar, self.curve_efficiency):
            writer.writerow([repr(float(x)), repr(float(2.0 * x / (2.0 * math.pi))), repr(float(y))])
        return buf.getvalue()


def interior_extrema(y: Sequence[float], rel_tol: float = 1e-4) -> tuple[int, int]:
    """Numbers of interior local maxima and minima, ignoring changes below ``rel_tol``.

    Consecutive samples that differ by less than ``rel_tol`` times the
    largest value are treated as equal, so a saturated plateau has none.
    """
    y = np.asarray(y, dtype=float)
    scale = max(float(np.max(np.abs(y))), 1e-300)
    d = np.diff(y)
    signs = [int(np.sign(v)) for v in d if abs(v) > rel_tol * scale]
    n_max = sum(1 for a, b in zip(signs, signs[1:]) if a > 0 and b < 0)
    n_min = sum(1 for a, b in zip(signs, signs[1:]) if a < 0 and b > 0)
    return n_max, n_min


def is_monotone_saturating(y: Sequence[float], rel_tol: float = 1e-4) -> bool:
    """Nondecreasing up to ``rel_tol`` of the maximum."""
    y = np.asarray(y, dtype=float)
    scale = max(float(np.max(np.abs(y))), 1e-300)
    return bool(np.all(np.diff(y) >= -rel_tol * scale))


def optimize_read_power(scenario: Scenario, bounds: tuple[float, float], n_coarse: int = 24,
                        rel_tol: float = 1e-4, max_golden: int = 60, refine: int = 1,
                        objective: Callable[[Scenario], float] | None = None) -> PowerOptimum:
    """Maximise the conditional efficiency over the peak read ``Omega_bar``.

    A log-spaced coarse scan over ``bounds`` (rad/s, barred) is followed by
    golden-section refinement in ``log Omega_bar`` on the bracket around the
    best coarse sample. The full coarse curve is returned; several interior
    maxima set ``non_unimodal``.

    Raises
    ------
    ScanError
        If the bounds are not positive and increasing.
    """
    lo, hi = map(float, bounds)
    if not (lo > 0 and hi > lo and math.isfinite(hi)):
        raise ScanError(f"power bounds must satisfy 0 < low < high, got {bounds!r}")
    if n_coarse < 3:
        raise ScanError("need at least 3 coarse points")
    evals: list[tuple[float, float]] = []
    f_obj = objective or (lambda s: efficiency_of(s, refine))

    def f(log_x: float) -> float:
        x = math.exp(log_x)
        val = f_obj(scenario.replace(read_pulse=scenario.read_pulse.with_peak(x)))
        evals.append((x, val))
        return val

    xs = np.linspace(math.log(lo), math.log(hi), n_coarse)
    ys = np.array([f(x) for x in xs])
    k = int(np.argmax(ys))
    n_max, _ = interior_extrema(ys, rel_tol)
    best_x, best_y = float(xs[k]), float(ys[k])
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, n_coarse - 1)]
    if b > a:
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(max_golden):
            if abs(b - a) < 1e-6:
                break
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - GOLDEN * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + GOLDEN * (b - a)
                fd = f(d)
        for x, y in ((c, fc), (d, fd)):
            if y > best_y:
                best_x, best_y = x, y
    return PowerOptimum(math.exp(best_x), best_y, np.exp(xs), ys, n_max > 1, n_max,
                        is_monotone_saturating(ys, rel_tol), tuple(evals))


def default_power_bounds(scenario: Scenario, low_sweep: float = 0.05, high_sweep: float = 40.0) -> tuple[float, float]:
    """Peak ``Omega_bar`` bounds giving total sweeps of ``low_sweep`` to ``high_sweep`` medium lengths."""
    L = scenario.ensemble.length_L
    return peak_for_sweep(scenario, low_sweep * L), peak_for_sweep(scenario, high_sweep * L)


# ---------------------------------------------------------------------------
# scans


@dataclass(frozen=True)
class ScanPoint:
    index: int
    value: float
    eta_cond: float = float("nan")
    efficiency: float = float("nan")      # fiber coupled
    fwhm: float = float("nan")
    multi_peak: bool = False
    peak_rabi_bar: float = float("nan")
    warnings: tuple[str, ...] = ()
    error: str | None = None
    waveform: Waveform | None = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ScanResult:
    """One record per scan point, in scan order; failed points carry ``error``."""

    parameter: str
    unit: str
    points: tuple[ScanPoint, ...]
    scenario_hash: str
    tool_version: str = __version__
    policy: str = "fixed"

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    @property
    def efficiencies(self) -> np.ndarray:
        return np.array([p.efficiency for p in self.points])

    @property
    def eta_cond(self) -> np.ndarray:
        return np.array([p.eta_cond for p in self.points])

    @property
    def fwhms(self) -> np.ndarray:
        return np.array([p.fwhm for p in self.points])

    @property
    def failed(self) -> tuple[ScanPoint, ...]:
        return tuple(p for p in self.points if not p.ok)

    CSV_COLUMNS = ("value", "eta_cond", "eta_fiber_coupled", "photon_fwhm_s", "multi_peak",
                   "peak_rabi_bar_rad_per_s", "error")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow((f"{self.parameter}_{self.unit}",) + self.CSV_COLUMNS[1:])
        for p in self.points:
            writer.writerow([repr(float(p.value)), repr(float(p.eta_cond)), repr(float(p.efficiency)),
                             repr(float(p.fwhm)), int(p.multi_peak), repr(float(p.peak_rabi_bar)),
                             p.error or ""])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "scenario_hash": self.scenario_hash,
            "parameter": self.parameter,
            "unit": self.unit,
            "policy": self.policy,
            "n_points": len(self.points),
            "n_failed": len(self.failed),
            "points": [
                {"index": p.index, "value": p.value, "eta_cond": _num(p.eta_cond),
                 "eta_fiber_coupled": _num(p.efficiency), "fwhm_s": _num(p.fwhm),
                 "multi_peak": p.multi_peak, "peak_rabi_bar": _num(p.peak_rabi_bar),
                 "warnings": list(p.warnings), "error": p.error}
                for p in self.points
            ],
        }


def _num(x: float):
    return None if not math.isfinite(x) else float(x)


def evaluate_point(index: int, value: float, scenario: Scenario, refine: int = 1,
                   extra_warnings: Sequence[str] = ()) -> ScanPoint:
    """Waveform, efficiency and width of one scenario; failures are recorded, not raised."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            w = conditional_flux(scenario, refine)
    except (CorrelatorError, ValueError, ArithmeticError) as exc:
        return ScanPoint(index, value, error=f"{type(exc).__name__}: {exc}",
                         peak_rabi_bar=scenario.read_pulse.peak_rabi_bar)
    notes = tuple(extra_warnings) + tuple(w.warnings)
    try:
        width = fwhm(w)
        fw, multi = width.fwhm, width.multi_peak
    except WaveformError as exc:
        fw, multi = float("nan"), False
        notes = notes + (f"fwhm: {exc}",)
    return ScanPoint(index, value, w.eta_cond, w.total_efficiency, fw, multi,
                     scenario.read_pulse.peak_rabi_bar, notes, None, w)


PowerPolicy = str  # "fixed" | "optimize" | "matched-sweep"


def apply_power_policy(scenario: Scenario, policy: PowerPolicy, sweep_lengths: float = 1.0,
                       bounds: tuple[float, float] | None = None, n_coarse: int = 24,
                       refine: int = 1) -> tuple[Scenario, tuple[str, ...]]:
    """Set the read power of ``scenario`` according to ``policy``.

    ``fixed`` keeps the given peak; ``matched-sweep`` sets the total read
    sweep to ``sweep_lengths`` medium lengths; ``optimize`` maximises the
    conditional efficiency within ``bounds`` (default
    :func:`default_power_bounds`).
    """
    if policy == "fixed":
        return scenario, ()
    if policy == "matched-sweep":
        return with_sweep(scenario, sweep_lengths * scenario.ensemble.length_L), ()
    if policy == "optimize":
        opt = optimize_read_power(scenario, bounds or default_power_bounds(scenario), n_coarse, refine=refine)
        notes = ("efficiency curve has several maxima",) if opt.non_unimodal else ()
        return scenario.replace(read_pulse=scenario.read_pulse.with_peak(opt.best_rabi_bar)), notes
    raise ScanError(f"unknown power policy {policy!r}")


def _run_scan(parameter: str, unit: str, base: Scenario, values: Sequence[float],
              build: Callable[[float], Scenario], policy: PowerPolicy, threads: int, refine: int,
              policy_kwargs: dict) -> ScanResult:
    values = [float(v) for v in values]
    if not values:
        raise ScanError("scan list is empty")

    def job(item):
        i, v = item
        try:
            sc = build(v)
            sc, notes = apply_power_policy(sc, policy, refine=refine, **policy_kwargs)
        except (ValueError, CorrelatorError, ArithmeticError) as exc:
            return ScanPoint(i, v, error=f"{type(exc).__name__}: {exc}")
        return evaluate_point(i, v, sc, refine, notes)

    items = list(enumerate(values))
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(job, items))
    else:
        points = [job(it) for it in items]
    points.sort(key=lambda p: p.index)
    return ScanResult(parameter, unit, tuple(points), scenario_hash(base), policy=policy)


def scan_duration(base: Scenario, durations: Sequence[float], policy: PowerPolicy = "fixed",
                  transform: Callable[[Scenario, float], Scenario] | None = None,
                  threads: int = 1, refine: int = 1, **policy_kwargs) -> ScanResult:
    """Conditional waveform, efficiency and photon FWHM versus read-pulse FWHM.

    ``transform(scenario, duration)`` may adjust further parameters per point
    (e.g. optical depths) after the read pulse has been stretched.
    """
    for d in durations:
        if not d > 0:
            raise ScanError(f"durations must be > 0, got {d!r}")

    def build(d: float) -> Scenario:
        sc = base.replace(read_pulse=pulse_with_duration(base.read_pulse, d))
        return transform(sc, d) if transform else sc

    return _run_scan("read_fwhm", "s", base, durations, build, policy, threads, refine, policy_kwargs)


def scan_delay(base: Scenario, delays: Sequence[float], policy: PowerPolicy = "fixed",
               threads: int = 1, refine: int = 1, **policy_kwargs) -> ScanResult:
    """Conditional efficiency versus storage delay."""
    for d in delays:
        if not d >= 0:
            raise ScanError(f"delays must be >= 0, got {d!r}")
    return _run_scan("storage_delay", "s", base, delays, lambda d: base.replace(storage_delay=d),
                     policy, threads, refine, policy_kwargs)


def scan_power(base: Scenario, rabi_bar: Sequence[float], threads: int = 1, refine: int = 1) -> ScanResult:
    """Conditional efficiency versus peak read ``Omega_bar`` (rad/s)."""
    for r in rabi_bar:
        if not r >= 0:
            raise ScanError(f"Rabi frequencies must be >= 0, got {r!r}")
    return _run_scan("read_rabi_bar", "rad_per_s", base, rabi_bar,
                     lambda r: base.replace(read_pulse=base.read_pulse.with_peak(r)),
                     "fixed", threads, refine, {})
