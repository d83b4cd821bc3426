"""Physical parameter types shared by every stage of the simulation.

Conventions
-----------
* All quantities are SI; frequencies and decay rates of optical coherences
  are angular (rad/s).
* Optical depths and Rabi frequencies are stored *barred*:
  ``d = 2 * d_bar`` and ``Omega = 2 * Omega_bar``. Constructors that take
  the unbarred numbers halve them exactly once.
* Pulse envelopes are amplitude envelopes ``Omega_bar(t)``; quoted widths
  (FWHM, 1/e) refer to the *intensity* ``Omega_bar(t)**2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .quadrature import Spacing, TimeGrid

TWO_PI = 2.0 * math.pi
SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_GAMMA = TWO_PI * 3.03e6
FOUR_LN2 = 4.0 * math.log(2.0)


class SpinDecayMode(str, enum.Enum):
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"


class PulseFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RISING_EXPONENTIAL = "rising_exponential"
    DOUBLE_GAUSSIAN = "double_gaussian"
    TABULATED = "tabulated"


class InvariantError(ValueError):
    """A parameter violates a type invariant; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _require(cond: bool, field_name: str, message: str) -> None:
    if not cond:
        raise InvariantError(field_name, message)


# ---------------------------------------------------------------------------
# ensemble


@dataclass(frozen=True)
class EnsembleParams:
    """Constants of the atomic medium and the write detuning.

    Parameters
    ----------
    d_w_bar, d_r_bar : float
        Barred optical depths of the write (|g>-|e>) and read transitions.
    gamma_es, gamma_eg : float
        Optical coherence decay rates in rad/s.
    gamma_0 : float
        Spin decoherence parameter: a rate (1/s) in exponential mode, a time
        constant (s) in Gaussian mode, where ``inf`` means no decay.
    delta : float
        Write detuning in rad/s (sign kept).
    """

    d_w_bar: float
    d_r_bar: float
    delta: float
    gamma_es: float = DEFAULT_GAMMA
    gamma_eg: float = DEFAULT_GAMMA
    gamma_0: float = 53e-6
    spin_decay_mode: SpinDecayMode = SpinDecayMode.GAUSSIAN
    length_L: float = 3e-3
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        object.__setattr__(self, "spin_decay_mode", SpinDecayMode(self.spin_decay_mode))
        for name in ("d_w_bar", "d_r_bar", "gamma_es", "gamma_eg", "length_L", "c"):
            v = getattr(self, name)
            _require(math.isfinite(v) and v > 0, name, f"must be finite and > 0, got {v!r}")
        _require(not math.isnan(self.gamma_0) and self.gamma_0 > 0, "gamma_0",
                 f"must be > 0, got {self.gamma_0!r}")
        if self.spin_decay_mode is SpinDecayMode.EXPONENTIAL:
            _require(math.isfinite(self.gamma_0), "gamma_0", "exponential decay rate must be finite")
        _require(math.isfinite(self.delta) and self.delta != 0.0, "delta",
                 "detuning must be finite and nonzero")

    @classmethod
    def from_unbarred(cls, d_w: float, d_r: float, **kwargs) -> "EnsembleParams":
        """Build from optical depths in the unbarred convention (halved here)."""
        return cls(d_w_bar=0.5 * d_w, d_r_bar=0.5 * d_r, **kwargs)

    @property
    def d_w(self) -> float:
        return 2.0 * self.d_w_bar

    @property
    def d_r(self) -> float:
        return 2.0 * self.d_r_bar

    @property
    def write_spin_rate(self) -> float:
        """Spin decay rate acting during the write window (exponential mode only)."""
        return self.gamma_0 if self.spin_decay_mode is SpinDecayMode.EXPONENTIAL else 0.0

    def storage_amplitude_decay(self, s) -> np.ndarray:
        """Spin-wave amplitude factor after time ``s`` measured from the write end."""
        s = np.asarray(s, dtype=float)
        if self.spin_decay_mode is SpinDecayMode.EXPONENTIAL:
            return np.exp(-self.gamma_0 * s)
        if math.isinf(self.gamma_0):
            return np.ones_like(s)
        return np.exp(-0.5 * (s / self.gamma_0) ** 2)


# ---------------------------------------------------------------------------
# pulses


def _gauss_energy(amp2: float, prec: float, mean: float, lo, hi):
    """``amp2 * int_lo^hi exp(-prec (t - mean)^2) dt``."""
    r = math.sqrt(2.0 * prec)
    return amp2 * math.sqrt(math.pi / prec) * (ndtr(r * (hi - mean)) - ndtr(r * (lo - mean)))


@dataclass(frozen=True)
class PulseEnvelope:
    """Amplitude envelope ``Omega_bar(t)`` of a classical drive pulse.

    Times are in the pulse's own frame; the scenario places the support
    window inside the write or read window. Use the family constructors
    (:meth:`gaussian`, :meth:`rising_exponential`, :meth:`double_gaussian`,
    :meth:`tabulated`) rather than filling fields by hand.

    Attributes
    ----------
    peak_rabi_bar : float
        Peak barred Rabi frequency (rad/s). For the double-Gaussian family
        it is the amplitude of the first peak.
    fwhm : float
        Intensity FWHM of the (first) Gaussian peak.
    center : float
        Gaussian centre, first double-Gaussian centre, or the cutoff time of
        the rising exponential.
    width_1e : float
        Intensity 1/e time of the rising exponential.
    amplitude_ratio, separation, fwhm2 : float
        Second double-Gaussian peak: amplitude relative to the first,
        centre offset and intensity FWHM.
    table_times, table_values : tuple of float
        Tabulated envelope, linearly interpolated; values are normalised so
        that the largest equals one.
    """

    family: PulseFamily
    peak_rabi_bar: float
    t_start: float
    t_end: float
    fwhm: float = 0.0
    center: float = 0.0
    width_1e: float = 0.0
    amplitude_ratio: float = 0.0
    separation: float = 0.0
    fwhm2: float = 0.0
    table_times: tuple[float, ...] = ()
    table_values: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "family", PulseFamily(self.family))
        _require(math.isfinite(self.peak_rabi_bar) and self.peak_rabi_bar >= 0,
                 "peak_rabi_bar", f"must be finite and >= 0, got {self.peak_rabi_bar!r}")
        _require(math.isfinite(self.t_start) and math.isfinite(self.t_end) and self.t_end > self.t_start,
                 "support", f"need t_end > t_start, got [{self.t_start}, {self.t_end}]")
        fam = self.family
        if fam in (PulseFamily.GAUSSIAN, PulseFamily.DOUBLE_GAUSSIAN):
            _require(self.fwhm > 0 and math.isfinite(self.fwhm), "fwhm", f"must be > 0, got {self.fwhm!r}")
        if fam is PulseFamily.DOUBLE_GAUSSIAN:
            _require(self.fwhm2 > 0, "fwhm2", f"must be > 0, got {self.fwhm2!r}")
            _require(self.amplitude_ratio >= 0, "amplitude_ratio", "must be >= 0")
            _require(self.separation >= 0, "separation", "must be >= 0")
        if fam is PulseFamily.RISING_EXPONENTIAL:
            _require(self.width_1e > 0 and math.isfinite(self.width_1e), "width_1e",
                     f"must be > 0, got {self.width_1e!r}")
            _require(self.t_end == self.center, "support", "rising exponential support must end at its cutoff")
        if fam is PulseFamily.TABULATED:
            t = np.asarray(self.table_times, dtype=float)
            v = np.asarray(self.table_values, dtype=float)
            _require(t.size >= 2 and t.size == v.size, "table", "need >= 2 (time, value) pairs of equal length")
            _require(bool(np.all(np.diff(t) > 0)), "table_times", "must be strictly increasing")
            _require(bool(np.all(v >= 0)) and bool(np.all(np.isfinite(v))) and v.max() > 0,
                     "table_values", "must be finite, nonnegative and not all zero")
            _require(t[0] == self.t_start and t[-1] == self.t_end, "support", "must coincide with the table range")

    # -- constructors --------------------------------------------------------

    @classmethod
    def gaussian(cls, peak_rabi_bar: float, fwhm: float, support_fwhm: float = 3.0) -> "PulseEnvelope":
        """Gaussian with intensity FWHM ``fwhm``, support ``+-support_fwhm*fwhm``."""
        _require(fwhm > 0, "fwhm", f"must be > 0, got {fwhm!r}")
        half = support_fwhm * fwhm
        return cls(PulseFamily.GAUSSIAN, peak_rabi_bar, 0.0, 2.0 * half, fwhm=fwhm, center=half)

    @classmethod
    def rising_exponential(cls, peak_rabi_bar: float, width_1e: float, span_1e: float = 12.0) -> "PulseEnvelope":
        """Intensity ``exp((t - t_c)/width_1e)`` rising to a hard cutoff at ``t_c``."""
        _require(width_1e > 0, "width_1e", f"must be > 0, got {width_1e!r}")
        cut = span_1e * width_1e
        return cls(PulseFamily.RISING_EXPONENTIAL, peak_rabi_bar, 0.0, cut, center=cut, width_1e=width_1e)

    @classmethod
    def double_gaussian(cls, peak_rabi_bar: float, fwhm: float, separation: float,
                        amplitude_ratio: float = 1.0, fwhm2: float | None = None,
                        support_fwhm: float = 3.0) -> "PulseEnvelope":
        fwhm2 = fwhm if fwhm2 is None else fwhm2
        _require(fwhm > 0, "fwhm", f"must be > 0, got {fwhm!r}")
        _require(fwhm2 > 0, "fwhm2", f"must be > 0, got {fwhm2!r}")
        c1 = support_fwhm * fwhm
        return cls(PulseFamily.DOUBLE_GAUSSIAN, peak_rabi_bar, 0.0, c1 + separation + support_fwhm * fwhm2,
                   fwhm=fwhm, center=c1, separation=separation, amplitude_ratio=amplitude_ratio, fwhm2=fwhm2)

    @classmethod
    def tabulated(cls, peak_rabi_bar: float, times: Sequence[float], values: Sequence[float]) -> "PulseEnvelope":
        t = tuple(float(x) for x in times)
        v = np.asarray(values, dtype=float)
        _require(v.size >= 2 and v.max() > 0, "table_values", "need at least two values, not all zero")
        return cls(PulseFamily.TABULATED, peak_rabi_bar, t[0], t[-1],
                   table_times=t, table_values=tuple(float(x) for x in v / v.max()))

    @classmethod
    def zero(cls, duration: float = 1e-9) -> "PulseEnvelope":
        """An undriven window of the given length."""
        return cls.gaussian(0.0, duration / 6.0)

    def with_peak(self, peak_rabi_bar: float) -> "PulseEnvelope":
        return replace(self, peak_rabi_bar=float(peak_rabi_bar))

    @property
    def peak_rabi(self) -> float:
        """Unbarred peak Rabi frequency ``Omega = 2 Omega_bar``."""
        return 2.0 * self.peak_rabi_bar

    # -- evaluation ----------------------------------------------------------

    @property
    def _sigma_amp2(self) -> tuple[float, float]:
        # amplitude exp(-(t-c)^2 / (4 sigma^2)) <=> intensity FWHM = 2 sqrt(2 ln 2) sigma
        s1 = self.fwhm / math.sqrt(8.0 * math.log(2.0))
        s2 = self.fwhm2 / math.sqrt(8.0 * math.log(2.0)) if self.fwhm2 else 0.0
        return s1, s2

    def shape(self, t) -> np.ndarray:
        """Envelope normalised to ``peak_rabi_bar = 1`` (zero outside support)."""
        t = np.asarray(t, dtype=float)
        fam = self.family
        if fam is PulseFamily.GAUSSIAN:
            s1, _ = self._sigma_amp2
            out = np.exp(-((t - self.center) ** 2) / (4.0 * s1 * s1))
        elif fam is PulseFamily.DOUBLE_GAUSSIAN:
            s1, s2 = self._sigma_amp2
            c2 = self.center + self.separation
            out = (np.exp(-((t - self.center) ** 2) / (4.0 * s1 * s1))
                   + self.amplitude_ratio * np.exp(-((t - c2) ** 2) / (4.0 * s2 * s2)))
        elif fam is PulseFamily.RISING_EXPONENTIAL:
            out = np.exp(np.minimum(t - self.center, 0.0) / (2.0 * self.width_1e))
        else:
            out = np.interp(t, self.table_times, self.table_values)
        inside = (t >= self.t_start) & (t <= self.t_end)
        return np.where(inside, out, 0.0)

    def __call__(self, t) -> np.ndarray:
        return self.peak_rabi_bar * self.shape(t)

    def energy(self, t) -> np.ndarray:
        """``int_{t_start}^{t} Omega_bar(t')**2 dt'`` in closed form."""
        t = np.clip(np.asarray(t, dtype=float), self.t_start, self.t_end)
        return self.peak_rabi_bar ** 2 * self._shape_energy(t)

    @property
    def total_energy(self) -> float:
        return float(self.energy(self.t_end))

    def _shape_energy(self, t: np.ndarray) -> np.ndarray:
        a = self.t_start
        fam = self.family
        if fam is PulseFamily.GAUSSIAN:
            s1, _ = self._sigma_amp2
            return _gauss_energy(1.0, 1.0 / (2.0 * s1 * s1), self.center, a, t)
        if fam is PulseFamily.DOUBLE_GAUSSIAN:
            s1, s2 = self._sigma_amp2
            c1, c2, r = self.center, self.center + self.separation, self.amplitude_ratio
            p1, p2 = 1.0 / (4.0 * s1 * s1), 1.0 / (4.0 * s2 * s2)
            # cross term: product of the two amplitude Gaussians is a Gaussian
            pc = p1 + p2
            mc = (p1 * c1 + p2 * c2) / pc
            ac = math.exp(-p1 * p2 / pc * (c1 - c2) ** 2)
            return (_gauss_energy(1.0, 2.0 * p1, c1, a, t)
                    + _gauss_energy(r * r, 2.0 * p2, c2, a, t)
                    + _gauss_energy(2.0 * r * ac, pc, mc, a, t))
        if fam is PulseFamily.RISING_EXPONENTIAL:
            tau = self.width_1e
            return tau * (np.exp((t - self.center) / tau) - math.exp((a - self.center) / tau))
        # piecewise-linear table: exact integral of the squared interpolant
        tt = np.asarray(self.table_times)
        vv = np.asarray(self.table_values)
        h = np.diff(tt)
        seg = h * (vv[:-1] ** 2 + vv[:-1] * vv[1:] + vv[1:] ** 2) / 3.0
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        k = np.clip(np.searchsorted(tt, t, side="right") - 1, 0, tt.size - 2)
        x = t - tt[k]
        slope = (vv[k + 1] - vv[k]) / h[k]
        return cum[k] + vv[k] ** 2 * x + vv[k] * slope * x * x + slope * slope * x ** 3 / 3.0

    def breakpoints(self) -> tuple[float, ...]:
        """Times where panels must split (support edges, peaks, cutoffs)."""
        pts = [self.t_start, self.t_end]
        if self.family in (PulseFamily.GAUSSIAN, PulseFamily.DOUBLE_GAUSSIAN):
            pts.append(self.center)
        if self.family is PulseFamily.DOUBLE_GAUSSIAN:
            pts.append(self.center + self.separation)
        if self.family is PulseFamily.TABULATED:
            pts.extend(self.table_times)
        return tuple(sorted(set(pts)))

    @property
    def duration(self) -> float:
        """Intensity FWHM of the envelope (outermost half-maximum crossings)."""
        if self.family is PulseFamily.GAUSSIAN:
            return self.fwhm
        if self.family is PulseFamily.RISING_EXPONENTIAL:
            return self.width_1e * math.log(2.0)
        t = np.linspace(self.t_start, self.t_end, 20001)
        y = self.shape(t) ** 2
        above = np.nonzero(y >= 0.5 * y.max())[0]
        return float(t[above[-1]] - t[above[0]])

    @property
    def span(self) -> float:
        return self.t_end - self.t_start


# ---------------------------------------------------------------------------
# detection and grids


@dataclass(frozen=True)
class DetectionChain:
    """Efficiencies and noise of the photon detection path."""

    eta_fiber: float = 0.60
    eta_filter: float = 0.20
    eta_det: float = 0.43
    dark_rate: float = 130.0
    gate_width: float | None = None

    def __post_init__(self):
        for name in ("eta_fiber", "eta_filter", "eta_det"):
            v = getattr(self, name)
            _require(0.0 <= v <= 1.0, name, f"must lie in [0, 1], got {v!r}")
        _require(math.isfinite(self.dark_rate) and self.dark_rate >= 0, "dark_rate", "must be >= 0")
        if self.gate_width is not None:
            _require(math.isfinite(self.gate_width) and self.gate_width > 0, "gate_width", "must be > 0")

    def dark_counts(self, gate_width: float | None = None) -> float:
        """Expected dark counts in one gate."""
        gate = self.gate_width if gate_width is None else gate_width
        if gate is None:
            raise InvariantError("gate_width", "no gate width set")
        return self.dark_rate * gate

    def dark_probability(self, gate_width: float | None = None) -> float:
        return -math.expm1(-self.dark_counts(gate_width))

    @property
    def herald_efficiency(self) -> float:
        return self.eta_filter * self.eta_det


@dataclass(frozen=True)
class GridSettings:
    """Resolution of the discretisation.

    ``*_points`` are node counts; they are rounded down to whole panels of
    ``order`` Gauss-Legendre nodes.
    """

    write_points: int = 96
    medium_points: int = 64
    read_points: int = 384
    sweep_points: int = 320
    order: int = 16
    guard: float = 0.0
    spacing: Spacing = Spacing.UNIFORM

    def __post_init__(self):
        object.__setattr__(self, "spacing", Spacing(self.spacing))
        for name in ("write_points", "medium_points", "read_points", "sweep_points"):
            _require(getattr(self, name) >= 16, name, "must be >= 16")
        _require(self.order >= 2, "order", "must be >= 2")
        _require(self.guard >= 0 and math.isfinite(self.guard), "guard", "must be >= 0")

    def refined(self, factor: int = 2) -> "GridSettings":
        return replace(self, write_points=self.write_points * factor, medium_points=self.medium_points * factor,
                       read_points=self.read_points * factor, sweep_points=self.sweep_points * factor)


# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class Scenario:
    """One complete write-store-read experiment.

    The write window is ``[0, xi]``; the write pulse support sits inside it
    after a guard margin. The read window opens ``storage_delay`` after
    ``xi`` and likewise contains the read pulse support plus guards.
    """

    ensemble: EnsembleParams
    write_pulse: PulseEnvelope
    read_pulse: PulseEnvelope
    storage_delay: float = 0.0
    detection: DetectionChain = field(default_factory=DetectionChain)
    grids: GridSettings = field(default_factory=GridSettings)
    extra_decoherence: float = 0.0
    name: str = ""

    def __post_init__(self):
        _require(math.isfinite(self.storage_delay) and self.storage_delay >= 0, "storage_delay",
                 f"read window must start after the write window (delay >= 0), got {self.storage_delay!r}")
        _require(math.isfinite(self.extra_decoherence) and self.extra_decoherence >= 0, "extra_decoherence",
                 "laser linewidth must be >= 0")

    # window geometry
    @property
    def write_offset(self) -> float:
        """Absolute time of the write pulse's local zero."""
        return self.grids.guard - self.write_pulse.t_start

    @property
    def xi(self) -> float:
        """End of the write window; the read stage starts its clock here."""
        return self.write_pulse.span + 2.0 * self.grids.guard

    @property
    def read_start(self) -> float:
        return self.xi + self.storage_delay

    @property
    def read_offset(self) -> float:
        return self.read_start + self.grids.guard - self.read_pulse.t_start

    @property
    def read_end(self) -> float:
        return self.read_start + self.read_pulse.span + 2.0 * self.grids.guard

    @property
    def write_grid(self) -> TimeGrid:
        return TimeGrid(0.0, self.xi, self.grids.write_points, self.grids.spacing)

    @property
    def read_grid(self) -> TimeGrid:
        return TimeGrid(self.read_start, self.read_end, self.grids.read_points, self.grids.spacing)

    # absolute-time drives
    def write_rabi(self, t) -> np.ndarray:
        return self.write_pulse(np.asarray(t, dtype=float) - self.write_offset)

    def write_energy(self, t) -> np.ndarray:
        return self.write_pulse.energy(np.asarray(t, dtype=float) - self.write_offset)

    def read_rabi(self, t) -> np.ndarray:
        return self.read_pulse(np.asarray(t, dtype=float) - self.read_offset)

    def read_energy(self, t) -> np.ndarray:
        return self.read_pulse.energy(np.asarray(t, dtype=float) - self.read_offset)

    def write_breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted({0.0, self.xi, *(b + self.write_offset for b in self.write_pulse.breakpoints())}))

    def read_breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted({self.read_start, self.read_end,
                             *(b + self.read_offset for b in self.read_pulse.breakpoints())}))

    def read_amplitude_decay(self, t) -> np.ndarray:
        """Spin-wave amplitude factor at absolute read time ``t`` (from ``xi``)."""
        s = np.asarray(t, dtype=float) - self.xi
        out = self.ensemble.storage_amplitude_decay(s)
        if self.extra_decoherence > 0:
            out = out * np.exp(-TWO_PI * self.extra_decoherence * s)
        return out

    @property
    def gate_width(self) -> float:
        g = self.detection.gate_width
        return self.read_grid.span if g is None else g

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# regime checks


@dataclass(frozen=True)
class RegimeWarning:
    code: str
    message: str
    value: float
    threshold: float
    severity: str  # "soft" or "hard"


def _severity(ratio: float, soft_factor: float) -> str:
    return "hard" if ratio > soft_factor else "soft"


def validate_regime(scenario: Scenario, eps1: float = 0.5, kappa: float = 3.0,
                    soft_factor: float = 3.0) -> list[RegimeWarning]:
    """Check the adiabatic conditions the field solutions rely on.

    One :class:`RegimeWarning` per violated condition; nothing is ever
    raised. A violation is ``"soft"`` when the offending quantity is within
    ``soft_factor`` of its threshold and ``"hard"`` beyond that. The write
    conditions are skipped for an undriven write pulse.
    """
    ens = scenario.ensemble
    out: list[RegimeWarning] = []
    wp, rp = scenario.write_pulse, scenario.read_pulse
    if wp.peak_rabi_bar > 0:
        q = ens.gamma_es * wp.duration * ens.d_w_bar
        if not q < eps1:
            out.append(RegimeWarning(
                "write_adiabatic",
                f"gamma_es * tau_W * d_w_bar = {q:.3g} is not below {eps1:g}; "
                "the write pulse is not short compared with the collective decay",
                q, eps1, _severity(q / eps1, soft_factor)))
        bound = kappa * max(wp.peak_rabi_bar, ens.gamma_es)
        if not abs(ens.delta) > bound:
            ratio = bound / abs(ens.delta)
            out.append(RegimeWarning(
                "far_detuned",
                f"|delta| = {abs(ens.delta):.3g} rad/s is not above {kappa:g} * max(Omega_bar_W, gamma_es) "
                f"= {bound:.3g} rad/s",
                abs(ens.delta), bound, _severity(ratio, soft_factor)))
    if not ens.d_r_bar > 1.0:
        out.append(RegimeWarning(
            "read_optical_depth", f"d_r_bar = {ens.d_r_bar:.3g} is not above 1",
            ens.d_r_bar, 1.0, _severity(1.0 / ens.d_r_bar, soft_factor)))
    if rp.peak_rabi_bar > 0:
        q = rp.duration * ens.gamma_eg * ens.d_r_bar
        if not q > 1.0:
            out.append(RegimeWarning(
                "read_duration",
                f"tau_r * gamma_eg * d_r_bar = {q:.3g} is not above 1; "
                "the read pulse is not sufficiently long for adiabatic retrieval",
                q, 1.0, _severity(1.0 / q, soft_factor)))
    return out
