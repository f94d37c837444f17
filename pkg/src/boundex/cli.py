"""Command-line entry point: ``boundex <subcommand> [options]``.

Exit codes: 0 success, 2 invalid input or configuration, 3 a fit did not
converge, 4 at least one acceptance criterion failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from . import experiments as ex
from .acceptance import DEFAULT_SEED, format_table, run_acceptance
from .config import EXPERIMENTS, RunConfig, dump_config, load_config
from .correlation import CoincidenceHistogram, coincidence_histogram
from .dynamics import D, G, X, TimeTrace, evolve, rate_generator, steady_state
from .errors import CalibrationError, ConfigError, DomainError, FormatError, IntegrationError
from .figures import FIGURES, fit_figure
from .interferometry import write_map_csv
from .preset import ASSUMPTIONS, PAPER, g2_detector, paper_model
from .spectral import SpectrumTrace
from .timetags import TimeTagStream, read_ttag, write_ttag

EXIT_OK, EXIT_INVALID, EXIT_FIT, EXIT_ACCEPT = 0, 2, 3, 4


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ output helpers

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def _summary(out, experiment, preset, fitted, tolerances, passed, extra=None):
    doc = {"experiment": experiment, "preset_anchors": preset.anchors(), "fitted_params": fitted,
           "tolerances": tolerances, "pass": bool(passed)}
    if extra:
        doc.update(extra)
    write_json(Path(out) / "summary.json", doc)
    return doc


def _tol(expected, tolerance, measured, relative=False):
    lim = tolerance * abs(expected) if relative else tolerance
    return {"expected": expected, "tolerance": tolerance, "relative": relative, "measured": measured,
            "pass": bool(measured is not None and math.isfinite(measured) and abs(measured - expected) <= lim)}


def _fit_dict(fit):
    d = {"params": fit.as_dict(), "stderr": dict(zip(fit.names, fit.stderr.tolist())),
         "converged": fit.converged, "iterations": fit.iterations}
    d.update(fit.headline)
    return d


def _write_report(out, fit, name="fit_report.txt"):
    (Path(out) / name).write_text(fit.report())


def _write_trace(path, trace: TimeTrace, header):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, v in zip(trace.times, trace.values):
            fh.write(f"{t:.17g},{v:.17g}\n")


def _require_seed(seed, what):
    if seed is None:
        raise ConfigError("seed", f"{what} needs an explicit --seed")
    return seed


# ------------------------------------------------------------------ experiments

def _run_spectrum(cfg, preset, out):
    tr = ex.emission_spectrum(_require_seed(cfg.seed, "spectrum"), preset=preset)
    tr.to_csv(out / "spectrum.csv")
    fit = fit_figure("2b", tr)
    _write_report(out, fit)
    tol = {"f_dw": _tol(0.94, 0.01, fit.headline["f_dw"])}
    _summary(out, "spectrum", preset, _fit_dict(fit), tol, fit.converged and tol["f_dw"]["pass"])
    return fit.converged


def _run_g2(cfg, preset, out):
    seed = _require_seed(cfg.seed, "g2")
    m = replace(paper_model(preset), **cfg.emitter) if cfg.emitter else paper_model(preset)
    det = None
    if cfg.detector:
        pops = steady_state(rate_generator(float(preset.g2_power), float(preset.stabilize_power), m))
        on = 1.0 if m.telegraph is None else m.telegraph.on_fraction
        det = replace(g2_detector(m.gamma_rad * pops[X] * on, preset), **cfg.detector)
    stream, truth = ex.g2_histogram_stream(seed, preset, model=m, detector=det)
    write_ttag(out / "events.ttag", stream)
    h = coincidence_histogram(stream, bin_width=float(preset.bin_width) * 1e12)
    h.to_csv(out / "histogram.csv")
    fit = fit_figure("2d", h, signal_fraction=float(preset.signal_fraction))
    _write_report(out, fit)
    tol = {"q0": _tol(0.37, 0.08, fit["q0"]),
           "bunch_ratio": _tol(0.27, 0.05, fit["bunch_ratio"]),
           "tau1_ns": _tol(4.05, 0.15, fit["tau1"], relative=True)}
    ok = fit.converged and all(t["pass"] for t in tol.values())
    _summary(out, "g2", preset, _fit_dict(fit), tol, ok, {"truth": truth})
    return fit.converged


def _run_interferogram(cfg, preset, out):
    dts = cfg.optics.get("dtheta_deg", [-float(preset.qwp_angle_map), 0.0, float(preset.qwp_angle_map)])
    power = float(cfg.optics.get("power", float(preset.low_power)))
    ext = cfg.optics.get("extinction")
    d, rad, imap = ex.interference_map(dts, power, preset=preset)
    write_map_csv(out / "interferogram_map.csv", d, rad, imap)
    fitted, tol = {}, {}
    for dt in dts:
        tr = ex.interference(dt, power, preset=preset, extinction=ext)
        tr.to_csv(out / f"interferogram_{dt:+.3f}deg.csv")
        y = tr.i_diff
        s = np.sign(y)
        s = s[s != 0]
        changes = int(np.count_nonzero(np.diff(s)))
        vis = tr.visibility[tr.defined]
        fitted[f"{dt:+.3f}"] = {"sign_changes": changes,
                                "peak_abs_visibility": float(np.max(np.abs(vis))) if vis.size else None}
        if dt != 0 and ext is None:
            tol[f"sign_changes_{dt:+.3f}"] = _tol(1, 0, changes)
    _summary(out, "interferogram", preset, fitted, tol, all(t["pass"] for t in tol.values()),
             {"power_nw": power})
    return True


def _run_dynamics(cfg, preset, out):
    m = replace(paper_model(preset), **cfg.emitter) if cfg.emitter else paper_model(preset)
    seq = cfg.pulse_sequence()
    init = {"G": (1.0, 0.0, 0.0), "X": (0.0, 1.0, 0.0), "D": (0.0, 0.0, 1.0)}[cfg.sequence.get("initial", "G")]
    tr = evolve(seq, m, float(cfg.sequence.get("dt_ns", 1.0)) * 1e-9, initial=init)
    tr.to_csv(out / "populations.csv")
    final = {"pop_g": tr.populations[-1, G], "pop_x": tr.populations[-1, X],
             "pop_d": tr.populations[-1, D], "integrated_rf_photons": float(trapezoid(tr.rf_intensity, tr.times))}
    _summary(out, "dynamics", preset, final, {}, True, {"sequence_rows": seq.to_rows()})
    return True


def _run_recovery(cfg, preset, out):
    p_ab = float(preset.recovery_high_power) if cfg.p_ab is None else float(cfg.p_ab)
    m = replace(paper_model(preset), **cfg.emitter) if cfg.emitter else paper_model(preset)
    trace, fit = ex.recovery(p_ab, m, preset)
    _write_trace(out / "recovery.csv", trace, "time_s,rf_intensity")
    _write_report(out, fit)
    tau = fit.headline["tau_ns"]
    tol = {}
    if math.isclose(p_ab, float(preset.recovery_high_power)):
        tol["tau_ns"] = _tol(9.3, 0.05, tau, relative=True)
    elif math.isclose(p_ab, float(preset.recovery_low_power)):
        tol["tau_ns"] = _tol(200.0, 0.10, tau, relative=True)
    fitted = _fit_dict(fit)
    fitted["p_ab_nw"] = p_ab
    _summary(out, "recovery", preset, fitted, tol, fit.converged and all(t["pass"] for t in tol.values()))
    return fit.converged


_RUNNERS = {"spectrum": _run_spectrum, "g2": _run_g2, "interferogram": _run_interferogram,
            "dynamics": _run_dynamics, "recovery": _run_recovery}


# ------------------------------------------------------------------ subcommands

def _parse_sets(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError("--set", f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"--set {k}", "value must be a number") from None
    return out


def _preset_from(cfg_preset, sets):
    vals = dict(cfg_preset or {})
    vals.update(sets)
    try:
        return PAPER.with_overrides(**vals) if vals else PAPER
    except (TypeError, AttributeError) as exc:
        raise ConfigError("preset", str(exc)) from None


def _out_dir(args, cfg=None):
    out = Path(args.out if args.out is not None else (cfg.output_dir if cfg else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    if args.config:
        cfg = load_config(args.config)
        if args.experiment:
            cfg.experiment = args.experiment
        if args.seed is not None:
            cfg.seed = args.seed
        if args.p_ab is not None:
            cfg.p_ab = args.p_ab
    else:
        if not args.experiment:
            raise ConfigError("experiment", "give --experiment or --config")
        cfg = RunConfig(args.experiment, args.seed, p_ab=args.p_ab)
    cfg.validate()
    preset = _preset_from(cfg.preset, _parse_sets(args.set))
    out = _out_dir(args, cfg)
    (out / "config.toml").write_text(dump_config(cfg))
    ok = _RUNNERS[cfg.experiment](cfg, preset, out)
    print((out / "summary.json").read_text(), end="")
    if not ok:
        raise _Fail(EXIT_FIT, "fit did not converge")


def cmd_analyze(args):
    try:
        streams = [read_ttag(p) for p in args.inputs]
    except OSError as exc:
        raise ConfigError("inputs", str(exc)) from None
    stream = TimeTagStream.merge(*streams) if len(streams) > 1 else streams[0]
    h = coincidence_histogram(stream, bin_width=args.bin_width, max_delay=args.max_delay,
                              channels=tuple(args.channels))
    out = _out_dir(args)
    h.to_csv(out / "histogram.csv")
    preset = _preset_from({}, _parse_sets(args.set))
    fit = fit_figure("2d", h, signal_fraction=args.signal_fraction)
    _write_report(out, fit)
    fitted = _fit_dict(fit)
    fitted["counts_per_channel"] = stream.counts_per_channel().tolist()
    _summary(out, "analyze", preset, fitted, {}, fit.converged)
    print(fit.report(), end="")
    if not fit.converged:
        raise _Fail(EXIT_FIT, "fit did not converge")


def _load_trace(figure, path):
    if figure in ("2b", "2c"):
        return SpectrumTrace.from_csv(path)
    if figure in ("2d", "2e"):
        return CoincidenceHistogram.from_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return TimeTrace(data[:, 0], data[:, 1])


def cmd_fit(args):
    try:
        trace = _load_trace(args.figure, args.input)
    except (OSError, ValueError) as exc:
        raise ConfigError("--input", str(exc)) from None
    opts = {}
    if args.signal_fraction is not None:
        opts["signal_fraction"] = args.signal_fraction
    if args.free_beta:
        opts["free_beta"] = True
    fit = fit_figure(args.figure, trace, **opts)
    out = _out_dir(args)
    _write_report(out, fit)
    preset = _preset_from({}, _parse_sets(args.set))
    _summary(out, f"fit-{args.figure}", preset, _fit_dict(fit), {}, fit.converged)
    print(fit.report(), end="")
    if not fit.converged:
        raise _Fail(EXIT_FIT, "fit did not converge")


def cmd_interfere(args):
    cfg = load_config(args.config) if args.config else RunConfig("interferogram")
    cfg.experiment = "interferogram"
    if args.dtheta_deg:
        cfg.optics["dtheta_deg"] = list(args.dtheta_deg)
    if args.power is not None:
        cfg.optics["power"] = args.power
    if args.extinction is not None:
        cfg.optics["extinction"] = args.extinction
    cfg.validate()
    preset = _preset_from(cfg.preset, _parse_sets(args.set))
    out = _out_dir(args, cfg)
    _run_interferogram(cfg, preset, out)
    print((out / "summary.json").read_text(), end="")


def cmd_dynamics(args):
    """Probe decay, discharge sweep and both recovery points from the calibrated model."""
    preset = _preset_from({}, _parse_sets(args.set))
    out = _out_dir(args)
    m = paper_model(preset)
    pd = ex.probe_decay(m, preset=preset)
    _write_trace(out / "probe_decay.csv", pd, "time_s,rf_intensity")
    f4a = fit_figure("4a", pd)
    sweep = ex.tau_e_trace(m, preset=preset)
    _write_trace(out / "tau_e_sweep.csv", sweep, "delay_s,integrated_rf")
    f4c = fit_figure("4c", sweep)
    fitted = {"probe_decay": _fit_dict(f4a), "discharge": _fit_dict(f4c)}
    tol = {"rate_per_us": _tol(1.013, 0.05, f4a.headline["rate_per_us"], True),
           "scale_us": _tol(21.0, 0.15, f4c.headline["scale_us"], True)}
    fits = [f4a, f4c]
    for p, exp, rt in ((preset.recovery_high_power, 9.3, 0.05), (preset.recovery_low_power, 200.0, 0.10)):
        trace, f = ex.recovery(float(p), m, preset)
        _write_trace(out / f"recovery_{float(p):g}nW.csv", trace, "time_s,rf_intensity")
        fitted[f"recovery_{float(p):g}nW"] = _fit_dict(f)
        tol[f"tau_ns_{float(p):g}nW"] = _tol(exp, rt, f.headline["tau_ns"], True)
        fits.append(f)
    ok = all(f.converged for f in fits)
    _summary(out, "dynamics-figures", preset, fitted, tol, ok and all(t["pass"] for t in tol.values()))
    print((out / "summary.json").read_text(), end="")
    if not ok:
        raise _Fail(EXIT_FIT, "fit did not converge")


def cmd_reproduce_all(args):
    preset = _preset_from({}, _parse_sets(args.set))
    seed = DEFAULT_SEED if args.seed is None else args.seed
    only = [s.strip().upper() for s in args.only.split(",")] if args.only else None
    results = run_acceptance(preset, ASSUMPTIONS, seed, only)
    table = format_table(results)
    print(table)
    out = _out_dir(args)
    (out / "acceptance.txt").write_text(table + "\n")
    write_json(out / "acceptance.json", {"seed": seed, "preset_anchors": preset.anchors(),
                                         "criteria": [r.as_dict() for r in results],
                                         "pass": all(r.passed for r in results)})
    if not all(r.passed for r in results):
        raise _Fail(EXIT_ACCEPT, "acceptance failures")


# ------------------------------------------------------------------ parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="master seed (required for random experiments)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--preset", choices=("paper",), default="paper",
                        help="value bundle the model is calibrated to")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a preset value, e.g. --set tau_rad=500e-12")

    p = argparse.ArgumentParser(prog="boundex", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run one experiment and fit it")
    s.add_argument("--experiment", choices=EXPERIMENTS)
    s.add_argument("--p-ab", type=float, help="above-band power (nW) for the recovery experiment")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", parents=[common], help="correlate .ttag files and fit g2")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--bin-width", type=float, default=40.0, help="ps")
    s.add_argument("--max-delay", type=float, default=20_000.0, help="ps")
    s.add_argument("--channels", type=int, nargs=2, default=(0, 1))
    s.add_argument("--signal-fraction", type=float)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("fit", parents=[common], help="fit a CSV trace with a figure recipe")
    s.add_argument("--figure", choices=FIGURES, required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--signal-fraction", type=float)
    s.add_argument("--free-beta", action="store_true")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("interfere", parents=[common], help="LO/RF interference traces and map")
    s.add_argument("--dtheta-deg", type=float, nargs="+")
    s.add_argument("--power", type=float)
    s.add_argument("--extinction", type=float)
    s.set_defaults(func=cmd_interfere)

    s = sub.add_parser("dynamics", parents=[common], help="charge-dynamics figures from the ODE model")
    s.set_defaults(func=cmd_dynamics)

    s = sub.add_parser("reproduce-all", parents=[common], help="run acceptance criteria A1-A9")
    s.add_argument("--only", help="comma-separated subset, e.g. A1,A3")
    s.set_defaults(func=cmd_reproduce_all)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else 0
    try:
        args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, DomainError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CalibrationError, IntegrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
