from __future__ import annotations

import math

import pytest
import yaml

from dlczsim.config import ConfigError, dump_scenario, load_scenario, scenario_hash, schema_document
from dlczsim.figures import PRESETS, load_preset, preset_text
from dlczsim.params import PulseFamily, SpinDecayMode
from dlczsim.units import Kind, UnitError, UnitMissingError, format_quantity, mhz_to_angular, parse_quantity

MINIMAL = """
ensemble: {d_w: 7.5, d_r: 5, detuning: -40 MHz}
write_pulse: {family: gaussian, rabi: 25.1 MHz, fwhm: 15 ns}
read_pulse: {family: gaussian, rabi: 23.5 MHz, fwhm: 35 ns}
storage_delay: 0 s
"""


@pytest.mark.parametrize("text,kind,want", [
    ("35 ns", Kind.TIME, 35e-9),
    ("1.27 us", Kind.TIME, 1.27e-6),
    ("53 µs", Kind.TIME, 53e-6),
    ("3 mm", Kind.LENGTH, 3e-3),
    ("1 MHz", Kind.ANGULAR, 2 * math.pi * 1e6),
    ("5 rad/s", Kind.ANGULAR, 5.0),
    ("130 Hz", Kind.RATE, 130.0),
    ("2 /us", Kind.RATE, 2e6),
    ("3e8 m/s", Kind.SPEED, 3e8),
    (0.5, Kind.PROBABILITY, 0.5),
])
def test_parse_quantity(text, kind, want):
    assert parse_quantity(text, kind) == pytest.approx(want, rel=1e-15)


def test_angular_flag_takes_hz_as_rad_per_s():
    assert parse_quantity("1 MHz", Kind.ANGULAR, angular=True) == 1e6
    assert mhz_to_angular(1.0) == pytest.approx(2 * math.pi * 1e6)


@pytest.mark.parametrize("value,kind,exc", [
    (35, Kind.TIME, UnitMissingError),
    ("35", Kind.TIME, UnitMissingError),
    ("35 furlongs", Kind.TIME, UnitError),
    ("3 MHz", Kind.TIME, UnitError),
    ("1 ns", Kind.DIMENSIONLESS, UnitError),
    (True, Kind.TIME, UnitError),
    ("abc", Kind.TIME, UnitError),
])
def test_parse_quantity_errors(value, kind, exc):
    with pytest.raises(exc):
        parse_quantity(value, kind)


@pytest.mark.parametrize("kind", [Kind.TIME, Kind.LENGTH, Kind.ANGULAR, Kind.RATE, Kind.SPEED, Kind.DIMENSIONLESS])
def test_format_round_trip(kind):
    v = 1.234567890123e-7
    assert parse_quantity(format_quantity(v, kind), kind) == v


def test_unbarred_values_are_halved():
    sc = load_scenario(MINIMAL)
    assert sc.ensemble.d_w_bar == 3.75
    assert sc.ensemble.d_r_bar == 2.5
    assert sc.write_pulse.peak_rabi_bar == pytest.approx(0.5 * 2 * math.pi * 25.1e6)
    assert sc.ensemble.delta == pytest.approx(-2 * math.pi * 40e6)


def test_barred_values_are_kept():
    text = MINIMAL.replace("d_w: 7.5", "d_w_bar: 3.75").replace("rabi: 25.1 MHz", "rabi_bar: 12.55 MHz")
    sc = load_scenario(text)
    ref = load_scenario(MINIMAL)
    assert sc.ensemble.d_w_bar == ref.ensemble.d_w_bar
    assert sc.write_pulse.peak_rabi_bar == pytest.approx(ref.write_pulse.peak_rabi_bar, rel=1e-15)


def test_defaults():
    sc = load_scenario(MINIMAL)
    assert sc.ensemble.gamma_es == pytest.approx(2 * math.pi * 3.03e6)
    assert sc.ensemble.spin_decay_mode is SpinDecayMode.GAUSSIAN
    assert sc.storage_delay == 0.0


@pytest.mark.parametrize("name", PRESETS)
def test_round_trip_presets(name):
    sc = load_preset(name)
    again = load_scenario(dump_scenario(sc))
    assert again == sc
    assert scenario_hash(again) == scenario_hash(sc)


def test_file_path_source(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(preset_text("figS1"))
    assert load_scenario(p) == load_preset("figS1")


def test_empty_document_lists_every_required_field():
    with pytest.raises(ConfigError) as info:
        load_scenario("{}")
    paths = {p.path for p in info.value.problems}
    assert {"ensemble", "write_pulse", "read_pulse"} <= paths
    assert info.value.codes == {"missing"}


def test_missing_fields_inside_sections_are_all_reported():
    with pytest.raises(ConfigError) as info:
        load_scenario("ensemble: {}\nwrite_pulse: {family: gaussian}\nread_pulse: {family: gaussian}\n")
    paths = {p.path for p in info.value.problems}
    assert {"ensemble.d_w_bar", "ensemble.d_r_bar", "ensemble.detuning",
            "write_pulse.rabi", "write_pulse.fwhm", "read_pulse.rabi", "read_pulse.fwhm"} <= paths


def test_bare_number_for_dimensional_field_is_rejected_with_line():
    text = MINIMAL.replace("fwhm: 35 ns", "fwhm: 35")
    with pytest.raises(ConfigError) as info:
        load_scenario(text)
    (prob,) = info.value.problems
    assert prob.code == "unit-missing"
    assert prob.path == "read_pulse.fwhm"
    assert prob.line == 4


def test_unknown_unit_unknown_key_and_syntax():
    with pytest.raises(ConfigError) as info:
        load_scenario(MINIMAL.replace("35 ns", "35 parsecs") + "colour: blue\n")
    assert info.value.codes == {"unit", "unknown-key"}
    with pytest.raises(ConfigError) as info:
        load_scenario("ensemble: [unclosed\n")
    assert info.value.codes == {"parse"}


def test_invariant_violations():
    with pytest.raises(ConfigError) as info:
        load_scenario(MINIMAL.replace("storage_delay: 0 s", "storage_delay: -1 us"))
    assert "invariant" in info.value.codes
    with pytest.raises(ConfigError) as info:
        load_scenario(MINIMAL.replace("d_w: 7.5", "d_w: -1"))
    assert "invariant" in info.value.codes
    with pytest.raises(ConfigError) as info:
        load_scenario(MINIMAL.replace("d_w: 7.5", "d_w: 7.5, d_w_bar: 3"))
    assert "invariant" in info.value.codes


def test_exponential_mode_requires_rate():
    with pytest.raises(ConfigError) as info:
        load_scenario(MINIMAL.replace("detuning: -40 MHz", "detuning: -40 MHz, spin_decay: {mode: exponential}"))
    assert "ensemble.spin_decay.gamma_0" in {p.path for p in info.value.problems}
    sc = load_scenario(MINIMAL.replace("detuning: -40 MHz",
                                       "detuning: -40 MHz, spin_decay: {mode: exponential, gamma_0: 10 kHz}"))
    assert sc.ensemble.gamma_0 == 1e4


def test_pulse_families_load():
    assert load_preset("fig5-rexp").read_pulse.family is PulseFamily.RISING_EXPONENTIAL
    assert load_preset("fig5-timebin").read_pulse.family is PulseFamily.DOUBLE_GAUSSIAN


def test_shipped_schema_matches_code():
    from importlib.resources import files
    shipped = yaml.safe_load(files("dlczsim").joinpath("data/scenario_schema.yaml").read_text())
    assert shipped == schema_document()
