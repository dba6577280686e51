"""Time-stepped scenario driver: temperature profiles, set-point schedules,
periodic regulation, power and energy ledgers, trace CSV.

Every tick records the state after whatever regulation happened on it.  The
``event`` column is a space-separated token list that makes a trace file
self-describing: ``mode=<m> dt=<s>`` on the first tick, ``setpoint`` when the
set-point changed (and the bias was reset), ``regulate it=<reads> conv=<0|1>``
for a regulation event and ``tr=<n>`` for generator transitions on that tick.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kvfile, tables
from .bb_gen import DEFAULT_CONFIG, BbGenState
from .chip_twin import (T_MAX, T_MIN, ChipEnvironment, ChipTwin, OperatingPoint, dynamic_power, fmax_true,
                        leakage, leakage_power, vbb_range)
from .controller import PidState, RegulationConfig, on_new_setpoint, regulate_once
from .errors import ConfigurationError, DomainError

TRACE_HEADER = ("t_s", "temp_c", "f_target_mhz", "vbb_v", "f_pmb_mhz", "f_pred_mhz", "f_true_mhz",
                "i_lkg_ua", "p_dyn_mw", "p_tot_mw", "event")
DEFAULT_DT = 0.1
_EPS = 1e-9


class ControlMode(enum.Enum):
    ON = "on"        # closed loop with margins
    OFF = "off"      # bias pinned at 0 V
    IDEAL = "ideal"  # exact, unquantized, margin-free bias every tick

    @classmethod
    def parse(cls, text: str) -> "ControlMode":
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ConfigurationError(f"unknown control mode {text!r} (expected on, off or ideal)") from None


@dataclass(frozen=True)
class TemperatureProfile:
    """Piecewise-linear temperature; held constant outside the breakpoints."""

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(t), float(c)) for t, c in self.breakpoints)
        object.__setattr__(self, "breakpoints", pts)
        if not pts:
            raise DomainError("temperature profile needs at least one breakpoint")
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise DomainError("temperature profile times must be strictly increasing")
        for _, c in pts:
            if not T_MIN <= c <= T_MAX:
                raise DomainError(f"temperature {c} C outside [{T_MIN}, {T_MAX}]")

    @classmethod
    def constant(cls, temperature: float) -> "TemperatureProfile":
        return cls(((0.0, temperature),))

    def at(self, t: float) -> float:
        ts, cs = zip(*self.breakpoints)
        return float(np.interp(t, ts, cs))


@dataclass(frozen=True)
class SetpointSchedule:
    """Step-wise frequency targets; the first entry also applies before its own time."""

    entries: tuple[tuple[float, float], ...]

    def __post_init__(self):
        es = tuple((float(t), float(f)) for t, f in self.entries)
        object.__setattr__(self, "entries", es)
        if not es:
            raise DomainError("set-point schedule needs at least one entry")
        if any(b[0] <= a[0] for a, b in zip(es, es[1:])):
            raise DomainError("set-point times must be strictly increasing")
        if any(not f > 0 for _, f in es):
            raise DomainError("set-point frequencies must be > 0")

    @classmethod
    def constant(cls, f_target: float) -> "SetpointSchedule":
        return cls(((0.0, f_target),))

    def at(self, t: float) -> float:
        current = self.entries[0][1]
        for start, f in self.entries:
            if start <= t + _EPS:
                current = f
        return current


@dataclass(frozen=True)
class TraceRecord:
    t: float
    temperature: float
    f_target: float
    vbb: float
    f_pmb: float        # nan when no reading exists (modes off and ideal)
    f_pred: float
    f_true: float
    i_lkg: float
    p_dyn: float
    p_tot: float
    event: str = ""


@dataclass(frozen=True)
class ScenarioTrace:
    records: tuple[TraceRecord, ...]
    mode: ControlMode
    dt: float

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def duration(self) -> float:
        return len(self.records) * self.dt

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([_num(r.t), _num(r.temperature), _num(r.f_target), _num(r.vbb), _num(r.f_pmb),
                        _num(r.f_pred), _num(r.f_true), _num(r.i_lkg), _num(r.p_dyn), _num(r.p_tot), r.event])
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _num(x: float) -> str:
    return "" if math.isnan(x) else f"{x:.10g}"


def _event_tokens(event: str) -> dict[str, str]:
    out = {}
    for tok in event.split():
        key, _, value = tok.partition("=")
        out[key] = value
    return out


def read_trace(path) -> ScenarioTrace:
    p = Path(path)
    try:
        fh = p.open(newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {p}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != TRACE_HEADER:
            raise ConfigurationError(f"{p}: expected header {','.join(TRACE_HEADER)}")
        records = []
        for row in reader:
            try:
                nums = [float(x) if x != "" else math.nan for x in row[:10]]
                records.append(TraceRecord(*nums, event=row[10]))
            except (ValueError, TypeError, IndexError) as exc:
                raise ConfigurationError(f"{p}:{reader.line_num}: malformed trace row") from exc
    if not records:
        raise DomainError(f"{p}: trace has no records")
    first = _event_tokens(records[0].event)
    try:
        mode, dt = ControlMode.parse(first["mode"]), float(first["dt"])
    except (KeyError, ValueError):
        raise ConfigurationError(f"{p}: first trace row does not declare mode and dt") from None
    return ScenarioTrace(tuple(records), mode, dt)


# --- profile and schedule files ----------------------------------------------------

def _read_two_columns(path, header: tuple[str, str]) -> list[tuple[float, float]]:
    p = Path(path)
    try:
        fh = p.open(newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {p}: {exc.strerror or exc}") from exc
    with fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows or tuple(c.strip() for c in rows[0]) != header:
        raise ConfigurationError(f"{p}: expected header {','.join(header)}")
    out = []
    for i, row in enumerate(rows[1:], 2):
        try:
            out.append((float(row[0]), float(row[1])))
        except (ValueError, IndexError):
            raise ConfigurationError(f"{p}: bad row {i}: {','.join(row)}") from None
    return out


def load_profile(path) -> TemperatureProfile:
    try:
        return TemperatureProfile(tuple(_read_two_columns(path, ("t_s", "temp_c"))))
    except DomainError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def load_schedule(path) -> SetpointSchedule:
    try:
        return SetpointSchedule(tuple(_read_two_columns(path, ("t_s", "f_target_mhz"))))
    except DomainError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


# --- simulation ------------------------------------------------------------------

def ideal_vbb(twin: ChipTwin, op: OperatingPoint, f_target: float) -> float:
    """Exact bias making fmax equal the target, clamped to the die's valid range."""
    f0 = fmax_true(twin, ChipEnvironment(op, 0.0))
    v = (f_target / f0 - 1.0) / (twin.param("bb_slope", op.vdd) / 0.1)
    lo, hi = vbb_range(twin, op.vdd)
    return min(max(v, lo), hi)


def run_scenario(twin: ChipTwin, config: RegulationConfig, profile: TemperatureProfile,
                 schedule: SetpointSchedule, duration: float, seed: int,
                 mode: ControlMode = ControlMode.ON, dt: float = DEFAULT_DT) -> ScenarioTrace:
    """Simulate ``duration`` seconds in ticks of ``dt``.

    The chip is clocked at the set-point, so dynamic power follows the target
    even when the die cannot actually reach it (visible as f_true < f_target).
    """
    if not duration > 0:
        raise DomainError(f"duration must be > 0, got {duration}")
    if not dt > 0:
        raise DomainError(f"time step must be > 0, got {dt}")
    vdd = config.model.vdd
    if config.vbb_bounds is None:
        config = replace(config, vbb_bounds=vbb_range(twin, vdd))
    master = np.random.default_rng(seed)
    n_ticks = int(round(duration / dt))
    if n_ticks < 1:
        raise DomainError("duration shorter than one time step")
    bbgen = BbGenState.initial(vdd)
    pid = PidState()
    base = 0.0
    f_pmb = f_pred = math.nan
    previous_target = None
    next_regulation = 0.0
    records = []
    for i in range(n_ticks):
        t = i * dt
        op = OperatingPoint(vdd, profile.at(t))
        f_target = schedule.at(t)
        tokens = [f"mode={mode.value}", f"dt={dt:g}"] if i == 0 else []
        transitions_before = bbgen.transitions
        changed = f_target != previous_target
        if changed:
            tokens.append("setpoint")
            previous_target = f_target
        if mode is ControlMode.ON:
            if changed:
                config = config.with_target(f_target)
                bbgen = on_new_setpoint(config, bbgen)
                pid, base = PidState(), 0.0
            if changed or t >= next_regulation - _EPS:
                out = regulate_once(config, pid, bbgen, twin, ChipEnvironment(op, bbgen.applied_vbb),
                                    int(master.integers(0, 2 ** 63 - 1)), base)
                bbgen, pid, base = out.bbgen, out.pid, out.base_vbb
                f_pmb, f_pred = out.f_pmb, out.f_pred
                tokens += ["regulate", f"it={out.iterations}", f"conv={int(out.converged)}"]
                next_regulation = t + config.regulation_period
            vbb = bbgen.applied_vbb
        elif mode is ControlMode.IDEAL:
            vbb = ideal_vbb(twin, op, f_target)
        else:
            vbb = 0.0
        if bbgen.transitions > transitions_before:
            tokens.append(f"tr={bbgen.transitions - transitions_before}")
        env = ChipEnvironment(op, vbb)
        p_dyn = dynamic_power(twin, op, f_target)
        p_tot = p_dyn + leakage_power(twin, env)
        records.append(TraceRecord(round(t, 9), op.temperature, f_target, vbb, f_pmb, f_pred,
                                   fmax_true(twin, env), leakage(twin, env), p_dyn, p_tot, " ".join(tokens)))
    return ScenarioTrace(tuple(records), mode, dt)


# --- energy accounting -----------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    mode: ControlMode
    duration: float                  # s
    energy_dyn: float                # mJ
    energy_lkg: float                # mJ
    energy_gen_idle: float           # mJ
    energy_transition: float         # mJ
    transitions: int
    regulation_events: int
    non_converged_events: int
    undershoot_ticks: int
    final_vbb: float
    final_leakage: float             # uA

    @property
    def energy(self) -> float:
        return self.energy_dyn + self.energy_lkg + self.energy_gen_idle + self.energy_transition

    @property
    def mean_power(self) -> float:
        return self.energy / self.duration

    @property
    def leakage_fraction(self) -> float:
        return self.energy_lkg / self.energy if self.energy > 0 else 0.0

    def to_kv(self) -> dict[str, object]:
        return {
            "mode": self.mode.value, "duration_s": self.duration, "energy_mj": self.energy,
            "energy_dyn_mj": self.energy_dyn, "energy_lkg_mj": self.energy_lkg,
            "energy_gen_idle_mj": self.energy_gen_idle, "energy_transition_mj": self.energy_transition,
            "mean_power_mw": self.mean_power, "leakage_fraction": self.leakage_fraction,
            "transitions": self.transitions, "regulation_events": self.regulation_events,
            "non_converged_events": self.non_converged_events, "undershoot_ticks": self.undershoot_ticks,
            "final_vbb_v": self.final_vbb, "final_i_lkg_ua": self.final_leakage,
        }


def energy_report(trace: ScenarioTrace) -> EnergyReport:
    """Rectangle-rule integration of the trace plus generator overheads."""
    if not trace.records:
        raise DomainError("cannot report on an empty trace")
    dt = trace.dt
    p_dyn = trace.column("p_dyn")
    p_tot = trace.column("p_tot")
    e_dyn = math.fsum(p_dyn) * dt
    e_lkg = math.fsum(p_tot - p_dyn) * dt
    transitions = regulations = failures = 0
    for r in trace.records:
        tok = _event_tokens(r.event)
        transitions += int(tok.get("tr", 0))
        if "regulate" in tok:
            regulations += 1
            failures += tok.get("conv") == "0"
    uses_generator = trace.mode is ControlMode.ON
    e_idle = DEFAULT_CONFIG.idle_power_uw * trace.duration * 1e-3 if uses_generator else 0.0
    e_tr = transitions * DEFAULT_CONFIG.transition_energy_nj * 1e-6
    undershoot = int(np.sum(trace.column("f_true") < trace.column("f_target") * (1 - 1e-12)))
    last = trace.records[-1]
    return EnergyReport(trace.mode, trace.duration, e_dyn, e_lkg, e_idle, e_tr, transitions, regulations,
                        failures, undershoot, last.vbb, last.i_lkg)


def compare(candidate: EnergyReport, baseline: EnergyReport) -> dict[str, float]:
    """Relative savings of ``candidate`` over ``baseline`` (positive means candidate is better)."""
    if not math.isclose(candidate.duration, baseline.duration, rel_tol=1e-9, abs_tol=1e-9):
        raise DomainError(f"trace durations differ: {candidate.duration} s vs {baseline.duration} s")
    return {
        "power_reduction_pct": 100.0 * (1.0 - candidate.mean_power / baseline.mean_power),
        "leakage_energy_ratio": candidate.energy_lkg / baseline.energy_lkg,
        "final_leakage_ratio": candidate.final_leakage / baseline.final_leakage,
    }


def summary_text(report: EnergyReport, comparison: dict[str, float] | None = None) -> str:
    values = report.to_kv()
    if comparison:
        values.update(comparison)
    return kvfile.dump(values, header=["scenario summary"])


def default_example_profile() -> TemperatureProfile:
    """Illustrative thermal-chamber run: hold, cool to 10 C, heat to 80 C, hold."""
    return TemperatureProfile(((0.0, 25.0), (20.0, 25.0), (40.0, 10.0), (60.0, 10.0), (170.0, 80.0),
                               (200.0, 80.0)))


FREQUENCY_STEPS = SetpointSchedule(((0.0, 175.0), (20.0, 200.0), (40.0, 100.0), (60.0, 150.0)))
TRACKING_TARGET_MHZ = tables.ANCHOR_F_TARGET_MHZ

