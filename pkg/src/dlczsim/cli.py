"""Command-line interface: ``dlczsim <verb> [options]``.

Exit codes: 0 success, 1 input error, 2 numerical non-convergence,
3 partial scan failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (ScanError, ScanResult, optimize_read_power, scan_delay, scan_duration)
from .config import ConfigError, dump_scenario, load_scenario, scenario_hash
from .correlators import CorrelatorError, conditional_efficiency, conditional_flux
from .figures import FIGURES, PRESETS, fig23_transform, load_preset, reproduce_figure
from .kernels import MonotonicityError
from .params import Scenario, validate_regime
from .photon_stats import TmsvDetectorModel, click_probabilities, g2_conditional, g2_unconditional, gate_width_scan
from .units import Kind, UnitError, parse_quantity
from .waveform import CSV_COLUMNS, fwhm, WaveformError, write_waveform

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3

OUTPUT_HELP = f"""\
output files:
  waveform CSV     columns {', '.join(CSV_COLUMNS)}; JSON sidecar with eta_cond,
                   eta_fiber_coupled, fwhm_s, grid, scenario_hash, warnings
  scan CSV         columns <parameter>_<unit>, {', '.join(ScanResult.CSV_COLUMNS[1:])}
  power-curve CSV  columns rabi_bar_rad_per_s, rabi_over_2pi_hz, eta_cond
  g2 CSV           columns <parameter>, g2_conditional, g2_unconditional, p_w
  The full description ships as dlczsim/data/output_schema.json.

exit codes: 0 success, 1 input error, 2 numerical non-convergence, 3 partial scan failure
"""


class InputError(ValueError):
    pass


def _quantities(text: str, kind: Kind) -> list[float]:
    """Comma-separated list of quantities, e.g. ``"0.3 us, 1.27 us"``."""
    items = [x.strip() for x in text.split(",") if x.strip()]
    if not items:
        raise InputError("empty list")
    try:
        return [parse_quantity(x, kind) for x in items]
    except UnitError as exc:
        raise InputError(str(exc)) from None


def _scenario(args) -> Scenario:
    if getattr(args, "preset", None):
        return load_preset(args.preset)
    if not args.config:
        raise InputError("a scenario is required: pass --config PATH or --preset NAME")
    path = Path(args.config)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    return load_scenario(path)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _write_scan(scan: ScanResult, out: Path, stem: str) -> int:
    (out / f"{stem}.csv").write_text(scan.to_csv())
    (out / f"{stem}.json").write_text(json.dumps(scan.to_json(), indent=2, sort_keys=True) + "\n")
    _emit({"files": [f"{stem}.csv", f"{stem}.json"], "n_points": len(scan.points), "n_failed": len(scan.failed)})
    return EXIT_PARTIAL if scan.failed else EXIT_OK


# ---------------------------------------------------------------------------
# verbs


def cmd_run(args) -> int:
    sc = _scenario(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        w = conditional_flux(sc, args.refine)
        err = float("nan")
        if args.tolerance is not None:
            err = conditional_efficiency(sc, args.refine, estimate_error=True).error
    extra = {"regime_warnings": [str(r) for r in validate_regime(sc)]}
    if math.isfinite(err):
        extra["grid_error_estimate"] = err
    stem = sc.name or "waveform"
    csv_path, json_path = write_waveform(w, _out(args) / stem, extra)
    summary = {"eta_cond": w.eta_cond, "eta_fiber_coupled": w.total_efficiency,
               "files": [csv_path.name, json_path.name], "scenario_hash": w.scenario_hash}
    try:
        summary["fwhm_s"] = fwhm(w).fwhm
    except WaveformError as exc:
        summary["fwhm_error"] = str(exc)
    if math.isfinite(err):
        summary["grid_error_estimate"] = err
    _emit(summary)
    if args.tolerance is not None and math.isfinite(err) and err > args.tolerance * max(w.eta_cond, 1e-300):
        print(f"grid refinement changed eta_cond by {err:.3g} (> tolerance {args.tolerance:g} relative)",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_scan_duration(args) -> int:
    sc = _scenario(args)
    durations = _quantities(args.durations, Kind.TIME)
    transform = fig23_transform if args.interpolate_depths else None
    scan = scan_duration(sc, durations, policy=args.policy, transform=transform, threads=args.threads,
                         refine=args.refine, **_policy_kwargs(args))
    return _write_scan(scan, _out(args), "scan_duration")


def cmd_scan_delay(args) -> int:
    sc = _scenario(args)
    delays = _quantities(args.delays, Kind.TIME)
    scan = scan_delay(sc, delays, policy=args.policy, threads=args.threads, refine=args.refine,
                      **_policy_kwargs(args))
    return _write_scan(scan, _out(args), "scan_delay")


def _policy_kwargs(args) -> dict:
    kw = {}
    if args.policy == "matched-sweep":
        kw["sweep_lengths"] = args.sweep_lengths
    return kw


def cmd_scan_power(args) -> int:
    sc = _scenario(args)
    try:
        # bounds are unbarred Omega, as the 'rabi' key of a scenario document
        lo = parse_quantity(args.low, Kind.ANGULAR) / 2.0
        hi = parse_quantity(args.high, Kind.ANGULAR) / 2.0
    except UnitError as exc:
        raise InputError(str(exc)) from None
    opt = optimize_read_power(sc, (lo, hi), n_coarse=args.points, refine=args.refine)
    out = _out(args)
    (out / "scan_power.csv").write_text(opt.to_csv())
    summary = {
        "tool_version": __version__,
        "scenario_hash": scenario_hash(sc),
        "best_rabi_bar_rad_per_s": opt.best_rabi_bar,
        "best_rabi_over_2pi_hz": 2.0 * opt.best_rabi_bar / (2.0 * math.pi),
        "best_eta_cond": opt.best_efficiency,
        "best_eta_fiber_coupled": opt.best_efficiency * sc.detection.eta_fiber,
        "non_unimodal": opt.non_unimodal,
        "interior_maxima": opt.n_local_maxima,
        "monotone": opt.monotone,
    }
    (out / "scan_power.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(summary)
    return EXIT_OK


def cmd_g2(args) -> int:
    try:
        base = TmsvDetectorModel.symmetric(args.p, K=args.K, eta_w=args.eta_w, eta_r=args.eta_r,
                                           dark_w=args.dark_w, split=args.split)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    result = {"tool_version": __version__, "p": args.p, "K": args.K, "n_max": base.n_max}
    if args.gates:
        gates = _quantities(args.gates, Kind.TIME)
        rate = parse_quantity(args.dark_rate, Kind.RATE)
        scan = gate_width_scan(base, gates, rate)
        out = _out(args)
        (out / "g2_gate_scan.csv").write_text(scan.to_csv())
        result.update({"gate_width_s": list(map(float, scan.values)),
                       "g2_conditional": list(map(float, scan.g2_cond)),
                       "g2_unconditional": list(map(float, scan.g2_uncond)),
                       "files": ["g2_gate_scan.csv"]})
    else:
        result.update({"g2_conditional": g2_conditional(base), "g2_unconditional": g2_unconditional(base),
                       "click_probabilities": click_probabilities(base).as_dict()})
    _emit(result)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    figures = FIGURES if args.figure == "all" else (args.figure,)
    summaries = []
    for fig in figures:
        res = reproduce_figure(fig, _out(args), quick=args.quick, threads=args.threads)
        summaries.append({"figure": fig, "pass": res.passed,
                          "checks": [c.as_dict() for c in res.checks]})
    _emit(summaries)
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _scenario(args)
    report = {"valid": True, "scenario_hash": scenario_hash(sc),
              "regime_warnings": [{"code": r.code, "severity": r.severity, "message": r.message,
                                   "value": r.value, "threshold": r.threshold}
                                  for r in validate_regime(sc, args.eps1, args.kappa)]}
    if args.dump:
        report["canonical"] = dump_scenario(sc)
    _emit(report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario document (YAML with explicit units)")
    common.add_argument("--preset", choices=PRESETS, help="built-in scenario instead of --config")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--tolerance", type=float, default=None,
                        help="relative grid-convergence tolerance; 'run' checks it by grid doubling")
    common.add_argument("--threads", type=int, default=1, help="worker threads for scans (default 1)")
    common.add_argument("--seed", type=int, default=None,
                        help="reserved; all computations are deterministic")
    common.add_argument("--refine", type=int, default=1, help="grid refinement factor (default 1)")

    parser = argparse.ArgumentParser(
        prog="dlczsim", description="DLCZ photon-pair source simulator.",
        epilog=OUTPUT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(name, help_, func):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_, epilog=OUTPUT_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=func)
        return p

    add("run", "conditional read-photon waveform and efficiency of one scenario", cmd_run)

    policy_help = ("read-power policy per point: fixed (keep the scenario's), optimize (maximise "
                   "efficiency), matched-sweep (total read sweep of --sweep-lengths medium lengths)")
    p = add("scan-duration", "scan the read-pulse FWHM", cmd_scan_duration)
    p.add_argument("--durations", required=True, help='comma-separated FWHMs, e.g. "0.3 us, 1.27 us"')
    p.add_argument("--policy", choices=("fixed", "optimize", "matched-sweep"), default="fixed", help=policy_help)
    p.add_argument("--sweep-lengths", type=float, default=1.0)
    p.add_argument("--interpolate-depths", action="store_true",
                   help="interpolate optical depths with the duration as in the fig2-fig3 preset")

    p = add("scan-delay", "scan the storage delay", cmd_scan_delay)
    p.add_argument("--delays", required=True, help='comma-separated delays, e.g. "0 s, 53 us"')
    p.add_argument("--policy", choices=("fixed", "optimize", "matched-sweep"), default="fixed", help=policy_help)
    p.add_argument("--sweep-lengths", type=float, default=1.0)

    p = add("scan-power", "scan and optimise the read Rabi frequency", cmd_scan_power)
    p.add_argument("--low", default="0.1 MHz", help="lowest Omega_R (Omega/2pi for Hz units)")
    p.add_argument("--high", default="30 MHz", help="highest Omega_R")
    p.add_argument("--points", type=int, default=24, help="coarse log-spaced points (default 24)")

    p = add("g2", "photon-counting g2 of the two-mode squeezed state with imperfect detectors", cmd_g2)
    p.add_argument("--p", type=float, required=True, help="pair-excitation probability")
    p.add_argument("--K", type=int, default=1, help="number of modes")
    p.add_argument("--eta-w", type=float, default=0.2 * 0.43, help="write detection efficiency")
    p.add_argument("--eta-r", type=float, default=1.0, help="efficiency of each read detector")
    p.add_argument("--dark-w", type=float, default=0.0, help="write dark-count probability per gate")
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--gates", help='comma-separated read gate widths for a dark-count scan, e.g. "1 us, 30 us"')
    p.add_argument("--dark-rate", default="130 Hz", help="read-detector dark-count rate for --gates")

    p = add("reproduce-figure", "reproduce a figure's trends and check them against bands", cmd_reproduce)
    p.add_argument("figure", choices=FIGURES + ("all",))
    p.add_argument("--quick", action="store_true", help="fewer scan points")

    p = add("validate", "check a scenario document and report regime warnings", cmd_validate)
    p.add_argument("--eps1", type=float, default=0.5)
    p.add_argument("--kappa", type=float, default=3.0)
    p.add_argument("--dump", action="store_true", help="include the canonical document")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1 or args.refine < 1:
        print("error: --threads and --refine must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    if args.tolerance is not None and not 0.0 < args.tolerance <= 0.1:
        print("error: --tolerance must be in (0, 0.1]", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, ScanError, UnitError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CorrelatorError, MonotonicityError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
