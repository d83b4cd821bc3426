"""Scenario documents: YAML with explicit units on every dimensional value.

A document is validated against :data:`SCHEMA` (also shipped as
``data/scenario_schema.yaml``). Problems are collected rather than raised one
at a time, so an empty document reports every missing required field at once.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from . import units
from .params import (DetectionChain, EnsembleParams, GridSettings, InvariantError, PulseEnvelope,
                     PulseFamily, Scenario, SpinDecayMode)
from .quadrature import Spacing
from .units import Kind, UnitError, UnitMissingError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Problem:
    path: str
    message: str
    code: str
    line: int | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.path}: {self.message}"


class ConfigError(ValueError):
    """Invalid scenario document; ``problems`` lists every diagnostic."""

    def __init__(self, problems: list[Problem]):
        self.problems = list(problems)
        super().__init__("invalid scenario document:\n  " + "\n  ".join(str(p) for p in self.problems))

    @property
    def codes(self) -> set[str]:
        return {p.code for p in self.problems}


@dataclass(frozen=True)
class Key:
    kind: Kind | str
    required: bool = False
    default: Any = None
    doc: str = ""


# String kinds used by the schema besides unit kinds.
INT, STR, BOOL, LIST = "int", "str", "bool", "list"

PULSE_KEYS: dict[str, Key] = {
    "family": Key(STR, False, "gaussian", "gaussian | rising_exponential | double_gaussian | tabulated"),
    "rabi": Key(Kind.ANGULAR, False, None, "peak Rabi frequency Omega (halved on load); one of rabi/rabi_bar required"),
    "rabi_bar": Key(Kind.ANGULAR, False, None, "peak barred Rabi frequency Omega_bar"),
    "angular": Key(BOOL, False, False, "Hz-type units in this section are already angular"),
    "fwhm": Key(Kind.TIME, False, None, "intensity FWHM (gaussian, double_gaussian first peak)"),
    "width_1e": Key(Kind.TIME, False, None, "intensity 1/e rise time (rising_exponential)"),
    "separation": Key(Kind.TIME, False, None, "distance between peak centres (double_gaussian)"),
    "amplitude_ratio": Key(Kind.DIMENSIONLESS, False, 1.0, "second/first peak amplitude (double_gaussian)"),
    "fwhm2": Key(Kind.TIME, False, None, "intensity FWHM of the second peak (double_gaussian; default fwhm)"),
    "times": Key(LIST, False, None, "sample times with units (tabulated)"),
    "values": Key(LIST, False, None, "relative amplitudes, normalised to max 1 (tabulated)"),
    "support_fwhm": Key(Kind.DIMENSIONLESS, False, 3.0, "support half-width in FWHMs (gaussian families)"),
    "span_1e": Key(Kind.DIMENSIONLESS, False, 12.0, "support length in 1/e times (rising_exponential)"),
    "center": Key(Kind.TIME, False, None, "peak centre / cutoff time in pulse frame (default from support)"),
    "support": Key(LIST, False, None, "explicit [start, end] of the support in pulse frame"),
}

SCHEMA: dict[str, Any] = {
    "schema_version": Key(INT, False, SCHEMA_VERSION, "document format version"),
    "name": Key(STR, False, "", "free-form label"),
    "ensemble": {
        "d_w": Key(Kind.DIMENSIONLESS, False, None, "write optical depth, unbarred (halved on load)"),
        "d_w_bar": Key(Kind.DIMENSIONLESS, False, None, "write optical depth, barred; one of d_w/d_w_bar required"),
        "d_r": Key(Kind.DIMENSIONLESS, False, None, "read optical depth, unbarred (halved on load)"),
        "d_r_bar": Key(Kind.DIMENSIONLESS, False, None, "read optical depth, barred; one of d_r/d_r_bar required"),
        "detuning": Key(Kind.ANGULAR, True, None, "write detuning Delta"),
        "gamma_es": Key(Kind.ANGULAR, False, "3.03 MHz", "|e>-|s> coherence decay"),
        "gamma_eg": Key(Kind.ANGULAR, False, "3.03 MHz", "|e>-|g> coherence decay"),
        "spin_decay": {
            "mode": Key(STR, False, "gaussian", "gaussian | exponential"),
            "gamma_0": Key("time_or_rate", False, "53 us", "time constant (gaussian) or rate (exponential)"),
        },
        "length": Key(Kind.LENGTH, False, "3 mm", "medium length L"),
        "c": Key(Kind.SPEED, False, "299792458 m/s", "speed of light"),
        "angular": Key(BOOL, False, False, "Hz-type units in this section are already angular"),
    },
    "write_pulse": PULSE_KEYS,
    "read_pulse": PULSE_KEYS,
    "storage_delay": Key(Kind.TIME, True, None, "gap between write-window end and read-window start"),
    "laser_linewidth": Key(Kind.RATE, False, "0 Hz", "optional extra read-stage decay exp(-2 pi dnu t)"),
    "detection": {
        "eta_fiber": Key(Kind.PROBABILITY, False, 0.60, "read-photon fiber coupling"),
        "eta_filter": Key(Kind.PROBABILITY, False, 0.20, "filter and fiber transmission"),
        "eta_det": Key(Kind.PROBABILITY, False, 0.43, "detector efficiency"),
        "dark_rate": Key(Kind.RATE, False, "130 Hz", "detector dark-count rate"),
        "gate_width": Key(Kind.TIME, False, None, "detection gate (default: read window span)"),
    },
    "grids": {
        "write_points": Key(INT, False, 96, "write-window nodes"),
        "medium_points": Key(INT, False, 64, "nodes along the medium"),
        "read_points": Key(INT, False, 384, "read-window nodes"),
        "sweep_points": Key(INT, False, 320, "nodes of the retrieval-coordinate grid"),
        "order": Key(INT, False, 16, "Gauss-Legendre nodes per panel"),
        "guard": Key(Kind.TIME, False, "0 s", "margin around each pulse support"),
        "spacing": Key(STR, False, "uniform", "uniform | chebyshev"),
    },
}

REQUIRED_SECTIONS = ("ensemble", "write_pulse", "read_pulse")


# ---------------------------------------------------------------------------
# YAML with line numbers


def _line_map(node, path: str = "", out: dict[str, int] | None = None) -> dict[str, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = f"{path}.{k.value}" if path else str(k.value)
            out[p] = k.start_mark.line + 1
            _line_map(v, p, out)
    return out


def _read_text(source) -> str:
    if isinstance(source, Path):
        return source.read_text()
    text = str(source)
    if "\n" not in text and len(text) < 4096:
        try:
            p = Path(text)
            if p.is_file():
                return p.read_text()
        except OSError:
            pass
    return text


class _Reader:
    """Walks a parsed document, converting values and collecting problems."""

    def __init__(self, doc: dict, lines: dict[str, int]):
        self.doc = doc
        self.lines = lines
        self.problems: list[Problem] = []

    def problem(self, path: str, message: str, code: str) -> None:
        self.problems.append(Problem(path, message, code, self.lines.get(path)))

    def section(self, path: str, keyspec: dict, data) -> dict:
        if data is None:
            data = {}
        if not isinstance(data, dict):
            self.problem(path, "must be a mapping", "type")
            return {}
        for k in data:
            if k not in keyspec:
                self.problem(f"{path}.{k}" if path else str(k), f"unknown key (allowed: {', '.join(keyspec)})",
                             "unknown-key")
        return data

    def value(self, path: str, key: Key, raw, angular: bool = False, kind: Kind | str | None = None):
        kind = kind or key.kind
        if raw is None:
            raw = key.default
            if raw is None:
                if key.required:
                    self.problem(path, f"required field missing ({key.doc})", "missing")
                return None
        try:
            if kind == INT:
                if isinstance(raw, bool) or not isinstance(raw, int):
                    raise UnitError(f"expected an integer, got {raw!r}")
                return raw
            if kind == STR:
                return str(raw)
            if kind == BOOL:
                if not isinstance(raw, bool):
                    raise UnitError(f"expected true/false, got {raw!r}")
                return raw
            if kind == LIST:
                if not isinstance(raw, list):
                    raise UnitError(f"expected a list, got {raw!r}")
                return raw
            return units.parse_quantity(raw, kind, angular=angular)
        except UnitMissingError as exc:
            self.problem(path, str(exc), "unit-missing")
        except UnitError as exc:
            self.problem(path, str(exc), "unit")
        return None


def _get(data: dict, key: str):
    return data.get(key) if isinstance(data, dict) else None


def _read_ensemble(r: _Reader, data) -> dict | None:
    keyspec = SCHEMA["ensemble"]
    data = r.section("ensemble", keyspec, data)
    ang = r.value("ensemble.angular", keyspec["angular"], _get(data, "angular")) or False
    out: dict[str, Any] = {}
    for bar, unbar in (("d_w_bar", "d_w"), ("d_r_bar", "d_r")):
        vb = r.value(f"ensemble.{bar}", keyspec[bar], _get(data, bar))
        vu = r.value(f"ensemble.{unbar}", keyspec[unbar], _get(data, unbar))
        if vb is not None and vu is not None:
            r.problem(f"ensemble.{unbar}", f"give either {unbar} or {bar}, not both", "invariant")
        elif vb is None and vu is None:
            if not any(p.path in (f"ensemble.{bar}", f"ensemble.{unbar}") for p in r.problems):
                r.problem(f"ensemble.{bar}", f"required field missing (one of {unbar}, {bar})", "missing")
        else:
            out[bar] = vb if vb is not None else 0.5 * vu
    out["delta"] = r.value("ensemble.detuning", keyspec["detuning"], _get(data, "detuning"), ang)
    out["gamma_es"] = r.value("ensemble.gamma_es", keyspec["gamma_es"], _get(data, "gamma_es"), ang)
    out["gamma_eg"] = r.value("ensemble.gamma_eg", keyspec["gamma_eg"], _get(data, "gamma_eg"), ang)
    sd_spec = keyspec["spin_decay"]
    sd = r.section("ensemble.spin_decay", sd_spec, _get(data, "spin_decay"))
    mode = r.value("ensemble.spin_decay.mode", sd_spec["mode"], _get(sd, "mode"))
    try:
        out["spin_decay_mode"] = SpinDecayMode(mode)
    except ValueError:
        r.problem("ensemble.spin_decay.mode", f"must be gaussian or exponential, got {mode!r}", "invariant")
        out["spin_decay_mode"] = SpinDecayMode.GAUSSIAN
    g0_kind = Kind.TIME if out["spin_decay_mode"] is SpinDecayMode.GAUSSIAN else Kind.RATE
    g0_raw = _get(sd, "gamma_0")
    if g0_raw is None and out["spin_decay_mode"] is SpinDecayMode.EXPONENTIAL:
        r.problem("ensemble.spin_decay.gamma_0", "required in exponential mode (a rate)", "missing")
    out["gamma_0"] = r.value("ensemble.spin_decay.gamma_0", sd_spec["gamma_0"], g0_raw, kind=g0_kind)
    out["length_L"] = r.value("ensemble.length", keyspec["length"], _get(data, "length"))
    out["c"] = r.value("ensemble.c", keyspec["c"], _get(data, "c"))
    if any(v is None for v in out.values()) or len(out) < 9:
        return None
    try:
        return {"ensemble": EnsembleParams(**out)}
    except InvariantError as exc:
        r.problem(f"ensemble.{exc.field}", str(exc), "invariant")
        return None


def _read_pulse(r: _Reader, name: str, data) -> PulseEnvelope | None:
    keyspec = PULSE_KEYS
    data = r.section(name, keyspec, data)
    nproblems = len(r.problems)

    def val(key: str, kind=None):
        return r.value(f"{name}.{key}", keyspec[key], _get(data, key), ang, kind)

    ang = r.value(f"{name}.angular", keyspec["angular"], _get(data, "angular")) or False
    family_raw = val("family")
    try:
        family = PulseFamily(family_raw)
    except ValueError:
        r.problem(f"{name}.family", f"unknown pulse family {family_raw!r}", "invariant")
        return None
    rabi, rabi_bar = val("rabi"), val("rabi_bar")
    if rabi is not None and rabi_bar is not None:
        r.problem(f"{name}.rabi", "give either rabi or rabi_bar, not both", "invariant")
    elif rabi is None and rabi_bar is None:
        if not any(p.path in (f"{name}.rabi", f"{name}.rabi_bar") for p in r.problems):
            r.problem(f"{name}.rabi", "required field missing (one of rabi, rabi_bar)", "missing")
    peak = rabi_bar if rabi_bar is not None else (None if rabi is None else 0.5 * rabi)

    center = val("center")
    support = val("support")
    if support is not None:
        if len(support) != 2:
            r.problem(f"{name}.support", "must be a [start, end] pair", "invariant")
            support = None
        else:
            try:
                support = [units.parse_quantity(s, Kind.TIME) for s in support]
            except UnitMissingError as exc:
                r.problem(f"{name}.support", str(exc), "unit-missing")
                support = None
            except UnitError as exc:
                r.problem(f"{name}.support", str(exc), "unit")
                support = None

    def need(key: str, kind=None):
        v = val(key, kind)
        if v is None and _get(data, key) is None:
            r.problem(f"{name}.{key}", f"required for the {family.value} family ({keyspec[key].doc})", "missing")
        return v

    try:
        if family is PulseFamily.GAUSSIAN:
            fwhm = need("fwhm")
            k = val("support_fwhm")
            if len(r.problems) > nproblems:
                return None
            c = k * fwhm if center is None else center
            lo, hi = support if support is not None else (0.0, 2.0 * c)
            return PulseEnvelope(family, peak, lo, hi, fwhm=fwhm, center=c)
        if family is PulseFamily.RISING_EXPONENTIAL:
            w = need("width_1e")
            k = val("span_1e")
            if len(r.problems) > nproblems:
                return None
            c = k * w if center is None else center
            lo, hi = support if support is not None else (0.0, c)
            return PulseEnvelope(family, peak, lo, hi, center=c, width_1e=w)
        if family is PulseFamily.DOUBLE_GAUSSIAN:
            fwhm, sep = need("fwhm"), need("separation")
            ratio, fwhm2, k = val("amplitude_ratio"), val("fwhm2"), val("support_fwhm")
            if len(r.problems) > nproblems:
                return None
            fwhm2 = fwhm if fwhm2 is None else fwhm2
            c = k * fwhm if center is None else center
            lo, hi = support if support is not None else (0.0, c + sep + k * fwhm2)
            return PulseEnvelope(family, peak, lo, hi, fwhm=fwhm, center=c, separation=sep,
                                 amplitude_ratio=ratio, fwhm2=fwhm2)
        times, values = need("times"), need("values")
        if len(r.problems) > nproblems:
            return None
        try:
            t = [units.parse_quantity(x, Kind.TIME) for x in times]
            v = [units.parse_quantity(x, Kind.DIMENSIONLESS) for x in values]
        except UnitMissingError as exc:
            r.problem(f"{name}.times", str(exc), "unit-missing")
            return None
        except UnitError as exc:
            r.problem(f"{name}.times", str(exc), "unit")
            return None
        return PulseEnvelope.tabulated(peak, t, v)
    except InvariantError as exc:
        r.problem(f"{name}.{exc.field}", str(exc), "invariant")
        return None


def _read_plain(r: _Reader, name: str, data, cls, mapping: dict[str, str]):
    keyspec = SCHEMA[name]
    data = r.section(name, keyspec, data)
    kwargs = {}
    for key, attr in mapping.items():
        v = r.value(f"{name}.{key}", keyspec[key], _get(data, key))
        if v is not None:
            kwargs[attr] = v
    if name == "grids" and "spacing" in kwargs:
        try:
            kwargs["spacing"] = Spacing(kwargs["spacing"])
        except ValueError:
            r.problem("grids.spacing", f"must be uniform or chebyshev, got {kwargs['spacing']!r}", "invariant")
            return None
    try:
        return cls(**kwargs)
    except InvariantError as exc:
        r.problem(f"{name}.{exc.field}", str(exc), "invariant")
        return None


def scenario_from_dict(doc) -> Scenario:
    """Build a :class:`Scenario` from an already parsed document."""
    return _build(doc, {})


def _build(doc, lines: dict[str, int]) -> Scenario:
    if doc is None:
        doc = {}
    r = _Reader(doc, lines)
    if not isinstance(doc, dict):
        raise ConfigError([Problem("<document>", "top level must be a mapping", "parse")])
    r.section("", SCHEMA, doc)
    version = r.value("schema_version", SCHEMA["schema_version"], doc.get("schema_version"))
    if version is not None and version != SCHEMA_VERSION:
        r.problem("schema_version", f"unsupported version {version} (this build reads {SCHEMA_VERSION})", "invariant")
    for sec in REQUIRED_SECTIONS:
        if doc.get(sec) is None:
            r.problem(sec, "required section missing", "missing")
    ens = _read_ensemble(r, doc.get("ensemble"))
    wp = _read_pulse(r, "write_pulse", doc.get("write_pulse"))
    rp = _read_pulse(r, "read_pulse", doc.get("read_pulse"))
    delay = r.value("storage_delay", SCHEMA["storage_delay"], doc.get("storage_delay"))
    lw = r.value("laser_linewidth", SCHEMA["laser_linewidth"], doc.get("laser_linewidth"))
    det = _read_plain(r, "detection", doc.get("detection"), DetectionChain,
                      {k: k for k in SCHEMA["detection"]})
    grids = _read_plain(r, "grids", doc.get("grids"), GridSettings,
                        {k: k for k in SCHEMA["grids"]})
    name = r.value("name", SCHEMA["name"], doc.get("name"))
    if r.problems:
        raise ConfigError(r.problems)
    try:
        return Scenario(ensemble=ens["ensemble"], write_pulse=wp, read_pulse=rp, storage_delay=delay,
                        detection=det, grids=grids, extra_decoherence=lw, name=name)
    except InvariantError as exc:
        raise ConfigError([Problem(exc.field, str(exc), "invariant", lines.get(exc.field))]) from None


def load_scenario(source) -> Scenario:
    """Load a scenario from a path or from YAML text.

    Raises
    ------
    ConfigError
        With one :class:`Problem` per issue: YAML syntax (``parse``), missing
        required fields (``missing``), dimensional values without units
        (``unit-missing``), unknown units (``unit``), unknown keys and type
        invariant violations (``invariant``), each naming the field and line.
    """
    text = _read_text(source)
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError([Problem("<document>", f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                                   "parse", line)]) from None
    lines = _line_map(node) if node is not None else {}
    return _build(doc, lines)


# ---------------------------------------------------------------------------
# serialisation


def _q(value: float, kind: Kind):
    if isinstance(value, float) and math.isinf(value):
        return f"inf {units.CANONICAL_UNIT[kind]}"
    return units.format_quantity(value, kind)


def _pulse_dict(p: PulseEnvelope) -> dict:
    d: dict[str, Any] = {
        "family": p.family.value,
        "rabi_bar": _q(p.peak_rabi_bar, Kind.ANGULAR),
        "support": [_q(p.t_start, Kind.TIME), _q(p.t_end, Kind.TIME)],
    }
    if p.family is PulseFamily.TABULATED:
        d.pop("support")
        d["times"] = [_q(t, Kind.TIME) for t in p.table_times]
        d["values"] = [float(v) for v in p.table_values]
        return d
    d["center"] = _q(p.center, Kind.TIME)
    if p.family in (PulseFamily.GAUSSIAN, PulseFamily.DOUBLE_GAUSSIAN):
        d["fwhm"] = _q(p.fwhm, Kind.TIME)
    if p.family is PulseFamily.DOUBLE_GAUSSIAN:
        d["separation"] = _q(p.separation, Kind.TIME)
        d["amplitude_ratio"] = float(p.amplitude_ratio)
        d["fwhm2"] = _q(p.fwhm2, Kind.TIME)
    if p.family is PulseFamily.RISING_EXPONENTIAL:
        d["width_1e"] = _q(p.width_1e, Kind.TIME)
    return d


def scenario_to_dict(sc: Scenario) -> dict:
    """Canonical document (SI units, barred quantities) for a scenario."""
    e = sc.ensemble
    g0_kind = Kind.TIME if e.spin_decay_mode is SpinDecayMode.GAUSSIAN else Kind.RATE
    det = sc.detection
    detection = {
        "eta_fiber": float(det.eta_fiber),
        "eta_filter": float(det.eta_filter),
        "eta_det": float(det.eta_det),
        "dark_rate": _q(det.dark_rate, Kind.RATE),
    }
    if det.gate_width is not None:
        detection["gate_width"] = _q(det.gate_width, Kind.TIME)
    g = sc.grids
    return {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "ensemble": {
            "d_w_bar": float(e.d_w_bar),
            "d_r_bar": float(e.d_r_bar),
            "detuning": _q(e.delta, Kind.ANGULAR),
            "gamma_es": _q(e.gamma_es, Kind.ANGULAR),
            "gamma_eg": _q(e.gamma_eg, Kind.ANGULAR),
            "spin_decay": {"mode": e.spin_decay_mode.value, "gamma_0": _q(e.gamma_0, g0_kind)},
            "length": _q(e.length_L, Kind.LENGTH),
            "c": _q(e.c, Kind.SPEED),
        },
        "write_pulse": _pulse_dict(sc.write_pulse),
        "read_pulse": _pulse_dict(sc.read_pulse),
        "storage_delay": _q(sc.storage_delay, Kind.TIME),
        "laser_linewidth": _q(sc.extra_decoherence, Kind.RATE),
        "detection": detection,
        "grids": {
            "write_points": g.write_points,
            "medium_points": g.medium_points,
            "read_points": g.read_points,
            "sweep_points": g.sweep_points,
            "order": g.order,
            "guard": _q(g.guard, Kind.TIME),
            "spacing": g.spacing.value,
        },
    }


def dump_scenario(sc: Scenario) -> str:
    """YAML text that :func:`load_scenario` turns back into an equal scenario."""
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, allow_unicode=True)


def scenario_hash(sc: Scenario) -> str:
    """Stable digest of the canonical document."""
    canon = json.dumps(scenario_to_dict(sc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def schema_document() -> dict:
    """The schema as a plain nested mapping (what ``data/scenario_schema.yaml`` holds)."""

    def convert(keyspec):
        if isinstance(keyspec, Key):
            kind = keyspec.kind.value if isinstance(keyspec.kind, Kind) else keyspec.kind
            entry = {"kind": kind, "required": keyspec.required, "doc": keyspec.doc}
            if isinstance(keyspec.kind, Kind) and keyspec.kind in units.CANONICAL_UNIT:
                entry["unit"] = "required"
            if keyspec.default is not None:
                entry["default"] = keyspec.default
            return entry
        return {k: convert(v) for k, v in keyspec.items()}

    return {"schema_version": SCHEMA_VERSION, "keys": convert(SCHEMA)}

