"""Command-line entry point.

Exit codes: 0 success, 1 domain or input error (one ``error: ...`` line on
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import kvfile, tables
from .calibration import CalibrationPlan, calibrate, load_plan
from .chip_twin import ChipTwin, OperatingPoint, ProcessCorner, default_twin, default_twin_text, load_twin
from .controller import controller_from_kv, load_controller
from .errors import BodyBiasError, ConfigurationError
from .model_fit import Awareness, fit_linear, model_to_kv, read_samples, write_samples
from .scenario import (FREQUENCY_STEPS, TRACKING_TARGET_MHZ, ControlMode, SetpointSchedule, TemperatureProfile,
                       compare, default_example_profile, energy_report, load_profile, load_schedule, read_trace,
                       run_scenario, summary_text)

# keys a --config file may set; command-line flags win over the file
_OPTION_KEYS = {"seed": int, "duration_s": float, "mode": str, "dt_s": float, "vdd_v": float, "temp_c": float,
                "corner": str, "awareness": str}


def _twin(arg: str | None, corner: str | None = None) -> ChipTwin:
    twin = default_twin() if arg in (None, "default") else load_twin(arg)
    return twin.with_corner(ProcessCorner.parse(corner)) if corner else twin


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_twin(args) -> None:
    _emit(default_twin_text(), args.out)


def cmd_fit(args) -> None:
    model = fit_linear(read_samples(args.samples), Awareness.parse(args.awareness))
    _emit(kvfile.dump(model_to_kv(model), header=["fitted PMB model"]), args.out)


def cmd_calibrate(args) -> None:
    twin = _twin(args.twin_pos or args.twin, args.corner)
    plan_path = args.plan_pos or args.plan
    plan = load_plan(plan_path, args.vdd) if plan_path else CalibrationPlan.default(args.vdd)
    result = calibrate(twin, OperatingPoint(args.vdd, args.temp), plan, seed=args.seed)
    values = model_to_kv(result.model)
    values.update({"corner": result.corner.value, "elapsed_s": result.elapsed,
                   "benchmark_calls": result.clock.benchmark_calls,
                   "skipped_vbb_points": len(result.skipped)})
    text = kvfile.dump(values, header=["calibrated PMB model"])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "model.cfg").write_text(text)
        write_samples(result.samples, out / "samples.csv")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> None:
    twin = _twin(args.twin, args.corner)
    config, _ = load_controller(args.controller)
    trace = run_scenario(twin, config, load_profile(args.profile), load_schedule(args.schedule), args.duration,
                         args.seed, ControlMode.parse(args.mode), args.dt)
    summary = summary_text(energy_report(trace))
    if args.out:
        trace.write(args.out)
        sys.stdout.write(summary)
    else:
        sys.stdout.write(trace.to_csv())


def cmd_report(args) -> None:
    report = energy_report(read_trace(args.trace))
    comparison = compare(report, energy_report(read_trace(args.baseline))) if args.baseline else None
    _emit(summary_text(report, comparison), args.out)


def cmd_tables(args) -> None:
    _emit(tables.render(), args.out)


def figures(out_dir, seed: int = 0) -> list[Path]:
    """Plot-ready CSVs for the frequency-step, temperature-tracking, leakage and power experiments."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    twin = default_twin()
    steps_cfg, _ = controller_from_kv({"awareness": "ProcAwareTempAware"})
    track_cfg, _ = controller_from_kv({"awareness": "ProcAwareTempUnaware", "f_target_mhz": TRACKING_TARGET_MHZ})
    target = SetpointSchedule.constant(TRACKING_TARGET_MHZ)
    written = []

    trace = run_scenario(twin, steps_cfg, TemperatureProfile.constant(25.0), FREQUENCY_STEPS, 80.0, seed)
    written.append(out / "setpoint_steps.csv")
    trace.write(written[-1])

    profile = default_example_profile()
    trace = run_scenario(twin, track_cfg, profile, target, profile.breakpoints[-1][0], seed)
    written.append(out / "temperature_tracking.csv")
    trace.write(written[-1])

    leak_rows = ["temp_c,i_lkg_off_ua,i_lkg_on_ua,i_lkg_ideal_ua"]
    power_rows = ["temp_c,p_tot_off_mw,p_tot_on_mw,reduction_pct"]
    for temp in np.arange(10.0, 80.1, 5.0):
        prof = TemperatureProfile.constant(float(temp))
        runs = {m: run_scenario(twin, track_cfg, prof, target, 20.0, seed, m) for m in ControlMode}
        on, off = energy_report(runs[ControlMode.ON]), energy_report(runs[ControlMode.OFF])
        leak_rows.append(f"{temp:g},{off.final_leakage:.6g},{on.final_leakage:.6g},"
                         f"{energy_report(runs[ControlMode.IDEAL]).final_leakage:.6g}")
        power_rows.append(f"{temp:g},{off.mean_power:.6g},{on.mean_power:.6g},"
                          f"{compare(on, off)['power_reduction_pct']:.4f}")
    for name, rows in (("leakage_vs_temperature.csv", leak_rows), ("power_vs_temperature.csv", power_rows)):
        written.append(out / name)
        written[-1].write_text("\n".join(rows) + "\n")
    return written


def cmd_figures(args) -> None:
    for path in figures(args.out or ".", args.seed):
        print(path)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("--config", default=None, help="flat key/value file with option defaults")

    p = argparse.ArgumentParser(prog="bodybias", description="Body-bias controller simulation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("twin", parents=[common], help="digital twin parameters")
    t.add_argument("action", choices=["print-defaults"])
    t.set_defaults(func=cmd_twin)

    f = sub.add_parser("fit", parents=[common], help="fit a PMB model to a sample CSV")
    f.add_argument("samples")
    f.add_argument("--awareness", default=None)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("calibrate", parents=[common], help="run the boot calibration on a twin")
    c.add_argument("twin_pos", nargs="?", metavar="twin", help="twin file or 'default'")
    c.add_argument("plan_pos", nargs="?", metavar="plan", help="calibration plan file")
    c.add_argument("--twin", default=None)
    c.add_argument("--plan", default=None)
    c.add_argument("--corner", default=None)
    c.add_argument("--vdd", type=float, default=None)
    c.add_argument("--temp", type=float, default=None)
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("run", parents=[common], help="simulate a scenario and write its trace")
    r.add_argument("twin", help="twin file or 'default'")
    r.add_argument("controller")
    r.add_argument("profile")
    r.add_argument("schedule")
    r.add_argument("--duration", type=float, default=None)
    r.add_argument("--mode", default=None, help="on, off or ideal")
    r.add_argument("--dt", type=float, default=None)
    r.add_argument("--corner", default=None)
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", parents=[common], help="energy summary of a trace, optionally vs a baseline")
    rep.add_argument("trace")
    rep.add_argument("baseline", nargs="?")
    rep.set_defaults(func=cmd_report)

    tb = sub.add_parser("tables", parents=[common], help="print the embedded measurement tables")
    tb.set_defaults(func=cmd_tables)

    fg = sub.add_parser("figures", parents=[common], help="write plot-ready CSVs of the standard experiments")
    fg.set_defaults(func=cmd_figures)
    return p


def _apply_config(args) -> None:
    """Fill unset options from --config, then from built-in defaults."""
    values = kvfile.load(args.config) if args.config else {}
    unknown = set(values) - set(_OPTION_KEYS)
    if unknown:
        raise ConfigurationError(f"{args.config}: unknown option key(s): {', '.join(sorted(unknown))}")
    defaults = {"seed": 0, "duration_s": 60.0, "mode": "on", "dt_s": 0.1, "vdd_v": 0.7, "temp_c": 25.0,
                "corner": None, "awareness": Awareness.PROC_AWARE_TEMP_AWARE.value}
    attrs = {"seed": "seed", "duration_s": "duration", "mode": "mode", "dt_s": "dt", "vdd_v": "vdd",
             "temp_c": "temp", "corner": "corner", "awareness": "awareness"}
    for key, attr in attrs.items():
        if not hasattr(args, attr) or getattr(args, attr) is not None:
            continue
        if key in values:
            try:
                setattr(args, attr, _OPTION_KEYS[key](values[key]))
            except ValueError as exc:
                raise ConfigurationError(f"{args.config}: {key}: {exc}") from exc
        else:
            setattr(args, attr, defaults[key])


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        _apply_config(args)
        args.func(args)
    except BodyBiasError as exc:
        print(f"error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
