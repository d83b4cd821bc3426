from __future__ import annotations

import json
import subprocess
import sys

import pytest

from dlczsim.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, EXIT_PARTIAL, build_parser, main
from dlczsim.figures import preset_text


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_help_documents_columns_and_exit_codes():
    text = build_parser().format_help()
    assert "time_s, flux_per_s" in text
    assert "exit codes" in text


def test_run_writes_waveform(tmp_path, capsys):
    code, out, _ = run(capsys, "run", "--preset", "figS1", "--out", str(tmp_path), "--tolerance", "1e-3")
    assert code == EXIT_OK
    summary = json.loads(out)
    assert 0.15 <= summary["eta_fiber_coupled"] <= 0.30
    assert (tmp_path / "figS1.csv").read_text().startswith("time_s,flux_per_s")
    side = json.loads((tmp_path / "figS1.json").read_text())
    assert side["eta_cond"] == pytest.approx(summary["eta_cond"])


def test_run_from_config_file(tmp_path, capsys):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(preset_text("figS1"))
    code, out, _ = run(capsys, "run", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == EXIT_OK


def test_tolerance_violation_is_numerical_error(tmp_path, capsys):
    cfg = tmp_path / "coarse.yaml"
    cfg.write_text(preset_text("figS2") + "grids: {read_points: 16, sweep_points: 32, write_points: 16,"
                   " medium_points: 16, order: 2}\n")
    code, _, err = run(capsys, "run", "--config", str(cfg), "--out", str(tmp_path), "--tolerance", "1e-9")
    assert code == EXIT_NUMERICAL
    assert "tolerance" in err


@pytest.mark.parametrize("argv", [
    ("validate",),
    ("run", "--config", "/does/not/exist.yaml"),
    ("scan-delay", "--preset", "figS1", "--delays", "-1 us"),
    ("scan-delay", "--preset", "figS1", "--delays", "5"),
    ("scan-power", "--preset", "figS1", "--low", "1 s"),
    ("g2", "--p", "1.5"),
    ("run", "--preset", "figS1", "--threads", "0"),
    ("run", "--preset", "figS1", "--tolerance", "2"),
])
def test_input_errors_exit_1(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_INPUT
    assert err.startswith("error")


def test_config_errors_list_problems(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("ensemble: {d_w: 7.5}\n")
    code, _, err = run(capsys, "validate", "--config", str(cfg))
    assert code == EXIT_INPUT
    assert "write_pulse" in err and "ensemble.detuning" in err


def test_validate_reports_regime(capsys):
    code, out, _ = run(capsys, "validate", "--preset", "figS2", "--dump")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["valid"] and "canonical" in doc
    assert {w["code"] for w in doc["regime_warnings"]} == {"write_adiabatic"}


def test_scan_delay(tmp_path, capsys):
    code, out, _ = run(capsys, "scan-delay", "--preset", "figS1", "--delays", "0 s, 53 us",
                       "--out", str(tmp_path), "--threads", "2")
    assert code == EXIT_OK
    rows = (tmp_path / "scan_delay.csv").read_text().splitlines()
    assert rows[0].startswith("storage_delay_s,eta_cond")
    assert len(rows) == 3


def test_scan_power_halves_unbarred_rabi(tmp_path, capsys):
    code, out, _ = run(capsys, "scan-power", "--preset", "figS2", "--low", "1 MHz", "--high", "4 MHz",
                       "--points", "4", "--out", str(tmp_path))
    assert code == EXIT_OK
    rows = (tmp_path / "scan_power.csv").read_text().splitlines()
    first = rows[1].split(",")
    assert float(first[1]) == pytest.approx(1e6)           # Omega / 2 pi
    assert float(first[0]) == pytest.approx(3.14159265e6)  # Omega_bar = Omega / 2


def test_scan_duration(tmp_path, capsys):
    code, _, _ = run(capsys, "scan-duration", "--preset", "figS2", "--durations", "0.5 us, 1 us",
                     "--policy", "matched-sweep", "--out", str(tmp_path))
    assert code == EXIT_OK
    assert (tmp_path / "scan_duration.json").is_file()


def test_partial_scan_failure_exit_3(tmp_path, capsys, monkeypatch):
    import dlczsim.analysis as analysis

    real = analysis.conditional_flux

    def flaky(sc, refine=1):
        if sc.storage_delay > 0:
            raise analysis.CorrelatorError("injected failure")
        return real(sc, refine)

    monkeypatch.setattr(analysis, "conditional_flux", flaky)
    code, out, _ = run(capsys, "scan-delay", "--preset", "figS1", "--delays", "0 s, 1 us", "--out", str(tmp_path))
    assert code == EXIT_PARTIAL
    assert json.loads(out)["n_failed"] == 1
    assert "injected failure" in (tmp_path / "scan_delay.csv").read_text()


def test_g2_verbs(tmp_path, capsys):
    code, out, _ = run(capsys, "g2", "--p", "0.01", "--eta-w", "0.001")
    assert code == EXIT_OK
    assert json.loads(out)["g2_conditional"] == pytest.approx(0.0393, abs=1e-3)
    code, out, _ = run(capsys, "g2", "--p", "0.003", "--eta-r", "0.005", "--gates", "100 ns, 10 us",
                       "--out", str(tmp_path))
    assert code == EXIT_OK
    g = json.loads(out)["g2_conditional"]
    assert g[1] > g[0]


def test_reproduce_figure(tmp_path, capsys):
    code, out, _ = run(capsys, "reproduce-figure", "fig5-rexp", "--out", str(tmp_path))
    assert code == EXIT_OK
    assert json.loads(out)[0]["pass"] is True


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dlczsim.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "0.1.0" in proc.stdout
