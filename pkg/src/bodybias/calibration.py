"""Boot-time calibration: sweep body bias, search fmax by benchmark pass/fail,
fit the per-die PMB model and classify the die's process corner.

Also holds the characterization helpers that build models of each awareness
level from tester data and measure their worst-case prediction error.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import kvfile, tables
from .bb_gen import STEP
from .chip_twin import (CORNERS_SLOW_FIRST, PMB_READ_TIME_S, ChipEnvironment, ChipTwin, OperatingPoint,
                        ProcessCorner, fmax_true, pmb_read, sensor_model, vbb_floor, vbb_max)
from .errors import ConfigurationError, DomainError, SearchError
from .model_fit import Awareness, CalibrationSample, LinearPmbModel, classify_corner, fit_linear

# Clock cycles one benchmark iteration takes; sized so the default plan lasts about 6 s.
CYCLES_PER_ITERATION = 38.7
TRANSITION_TIME_S = max(tables.BBGEN["transition_time_nwell_us"], tables.BBGEN["transition_time_pwell_us"]) * 1e-6


class SearchMethod(enum.Enum):
    LINEAR_SWEEP = "LinearSweep"
    BINARY_SEARCH = "BinarySearch"

    @classmethod
    def parse(cls, text: str) -> "SearchMethod":
        for m in cls:
            if str(text).strip().lower() in (m.value.lower(), m.name.lower()):
                return m
        raise ConfigurationError(f"unknown search method {text!r} (expected LinearSweep or BinarySearch)")


def default_vbb_points(vdd: float, count: int = tables.CALIBRATION_POINTS) -> tuple[float, ...]:
    """``count`` grid points ending at full forward bias."""
    top = round(vbb_max(vdd) / STEP)
    return tuple(round((top - i) * STEP, 9) for i in reversed(range(count)))


@dataclass(frozen=True)
class CalibrationPlan:
    vbb_points: tuple[float, ...]
    fmax_search: SearchMethod = SearchMethod.LINEAR_SWEEP
    step: float = tables.CALIBRATION_FREQ_STEP_MHZ   # sweep step or bisection resolution
    benchmark_iterations: int = tables.CALIBRATION_BENCHMARK_ITERATIONS
    start_frequency: float = tables.CALIBRATION_START_MHZ
    cycles_per_iteration: float = CYCLES_PER_ITERATION

    def __post_init__(self):
        pts = tuple(float(v) for v in self.vbb_points)
        object.__setattr__(self, "vbb_points", pts)
        if len(pts) < 2:
            raise ConfigurationError("a calibration plan needs at least two VBB points")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ConfigurationError("vbb_points must be strictly increasing")
        if any(abs(v / STEP - round(v / STEP)) > 1e-6 for v in pts):
            raise ConfigurationError(f"vbb_points must lie on the {STEP * 1000:g} mV grid")
        if self.step < 1.0:
            raise ConfigurationError("search step must be >= 1 MHz")
        if self.benchmark_iterations < 1 or not self.start_frequency > 0 or not self.cycles_per_iteration > 0:
            raise ConfigurationError("benchmark_iterations, start_frequency and cycles_per_iteration must be > 0")

    @classmethod
    def default(cls, vdd: float = 0.7, **overrides) -> "CalibrationPlan":
        return cls(default_vbb_points(vdd), **overrides)


@dataclass
class CalibrationClock:
    """Simulated time spent during calibration, split by activity."""

    benchmark_s: float = 0.0
    pmb_s: float = 0.0
    transition_s: float = 0.0
    benchmark_calls: int = 0

    @property
    def total(self) -> float:
        return self.benchmark_s + self.pmb_s + self.transition_s


def benchmark_passes(twin: ChipTwin, env: ChipEnvironment, freq: float,
                     plan: CalibrationPlan | None = None, clock: CalibrationClock | None = None) -> bool:
    """Run the benchmark at ``freq``; passing is inclusive of fmax itself."""
    if not freq > 0:
        raise DomainError(f"benchmark frequency must be > 0, got {freq}")
    if clock is not None:
        plan = plan or CalibrationPlan.default(env.op.vdd)
        clock.benchmark_calls += 1
        clock.benchmark_s += plan.benchmark_iterations * plan.cycles_per_iteration / (freq * 1e6)
    return freq <= fmax_true(twin, env)


def search_fmax(twin: ChipTwin, env: ChipEnvironment, plan: CalibrationPlan,
                clock: CalibrationClock | None = None) -> float:
    """Largest frequency ``start + n * step`` that passes the benchmark."""
    def passes(n: int) -> bool:
        return benchmark_passes(twin, env, plan.start_frequency + n * plan.step, plan, clock)

    if not passes(0):
        raise SearchError(f"benchmark already fails at {plan.start_frequency} MHz "
                          f"(vdd={env.op.vdd} V, T={env.op.temperature} C, vbb={env.vbb} V)")
    if plan.fmax_search is SearchMethod.LINEAR_SWEEP:
        n = 0
        while passes(n + 1):
            n += 1
        return plan.start_frequency + n * plan.step
    # gallop upward for a failing bound, then bisect
    lo, width = 0, 1
    while passes(lo + width):
        lo += width
        width *= 2
    hi = lo + width
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return plan.start_frequency + lo * plan.step


def reference_models(twin: ChipTwin, op: OperatingPoint) -> dict[ProcessCorner, LinearPmbModel]:
    """Characterized per-corner models at ``op``, used to classify a freshly calibrated die."""
    out = {}
    for corner in CORNERS_SLOW_FIRST:
        c, f0 = sensor_model(twin.with_corner(corner), op)
        out[corner] = LinearPmbModel(c, f0, awareness=Awareness.PROC_AWARE_TEMP_UNAWARE, vdd=op.vdd)
    return out


@dataclass(frozen=True)
class CalibrationResult:
    model: LinearPmbModel
    corner: ProcessCorner
    elapsed: float
    samples: tuple[CalibrationSample, ...] = field(repr=False)
    skipped: tuple[float, ...]
    clock: CalibrationClock = field(repr=False)

    def __iter__(self) -> Iterator:
        # unpacks as (model, corner, elapsed)
        return iter((self.model, self.corner, self.elapsed))


def calibrate(twin: ChipTwin, op: OperatingPoint, plan: CalibrationPlan | None = None, seed: int = 0,
              references: Mapping[ProcessCorner, LinearPmbModel] | None = None) -> CalibrationResult:
    """Run the boot calibration at a constant operating point.

    VBB points outside the die's valid range, or where the benchmark already
    fails at the start frequency, are skipped and reported.
    """
    plan = plan or CalibrationPlan.default(op.vdd)
    clock = CalibrationClock()
    seeds = np.random.default_rng(seed).integers(0, 2 ** 63 - 1, size=len(plan.vbb_points))
    lo, hi = vbb_floor(twin, op.vdd), vbb_max(op.vdd)
    samples, skipped = [], []
    current = 0.0
    for vbb, read_seed in zip(plan.vbb_points, seeds):
        if not (lo - 1e-9 <= vbb <= hi + 1e-9):
            skipped.append(vbb)
            continue
        if abs(vbb - current) > 1e-12:
            clock.transition_s += TRANSITION_TIME_S
            current = vbb
        env = ChipEnvironment(op, vbb)
        try:
            f_max = search_fmax(twin, env, plan, clock)
        except SearchError:
            skipped.append(vbb)
            continue
        f_pmb = pmb_read(twin, env, int(read_seed))
        clock.pmb_s += PMB_READ_TIME_S
        samples.append(CalibrationSample(f_pmb, f_max, vbb, op, twin.corner.value))
    if len(samples) < 2:
        raise SearchError(f"calibration found fewer than two usable VBB points at vdd={op.vdd} V, "
                          f"T={op.temperature} C")
    model = fit_linear(samples, Awareness.PROC_AWARE_TEMP_UNAWARE)
    refs = references or reference_models(twin, op)
    xs = [s.f_pmb for s in samples]
    corner = classify_corner(model, refs, (min(xs), max(xs)))
    return CalibrationResult(model, corner, clock.total, tuple(samples), tuple(skipped), clock)


def load_plan(path, vdd: float = 0.7) -> CalibrationPlan:
    """Plan from a key/value file; ``vbb_points`` is a comma-separated list of volts."""
    values = kvfile.load(path)
    known = {"vbb_points", "fmax_search", "step_mhz", "benchmark_iterations", "start_frequency_mhz",
             "cycles_per_iteration", "vdd_v"}
    unknown = set(values) - known
    if unknown:
        raise ConfigurationError(f"{path}: unknown plan key(s): {', '.join(sorted(unknown))}")
    vdd = float(values.get("vdd_v", vdd))
    kwargs: dict[str, object] = {}
    if "vbb_points" in values:
        raw = values["vbb_points"]
        items = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
        try:
            kwargs["vbb_points"] = tuple(float(v) for v in items if str(v).strip())
        except ValueError as exc:
            raise ConfigurationError(f"{path}: bad vbb_points: {exc}") from exc
    else:
        kwargs["vbb_points"] = default_vbb_points(vdd)
    if "fmax_search" in values:
        kwargs["fmax_search"] = SearchMethod.parse(str(values["fmax_search"]))
    for key, name, kind in (("step_mhz", "step", float), ("benchmark_iterations", "benchmark_iterations", int),
                            ("start_frequency_mhz", "start_frequency", float),
                            ("cycles_per_iteration", "cycles_per_iteration", float)):
        if key in values:
            kwargs[name] = kind(values[key])
    return CalibrationPlan(**kwargs)


# --- characterization of the three awareness levels -------------------------------

def _conditions(twin: ChipTwin, awareness: Awareness) -> tuple[list[ProcessCorner], list[float]]:
    corners = [twin.corner] if awareness is not Awareness.PROC_UNAWARE_TEMP_UNAWARE else list(CORNERS_SLOW_FIRST)
    temps = ([25.0] if awareness is Awareness.PROC_AWARE_TEMP_AWARE
             else list(tables.CHARACTERIZED_TEMPERATURES))
    return corners, temps


def characterized_vbb_range(twin: ChipTwin, vdd: float) -> tuple[float, float]:
    """Bias range over which models are characterized: the die's valid range, cut where
    body bias would take more than half of the zero-bias frequency away."""
    cut = -0.5 / (twin.param("bb_slope", vdd) / 0.1)
    return max(vbb_floor(twin, vdd), math.ceil(cut / STEP - 1e-9) * STEP), vbb_max(vdd)


def tester_samples(twin: ChipTwin, vdd: float, corners: Sequence[ProcessCorner], temperatures: Sequence[float],
                   n: int, seed: int) -> list[CalibrationSample]:
    """``n`` tester measurements: exact fmax paired with a noisy PMB reading.

    Corner, temperature and VBB (continuous over the characterized range) are
    drawn uniformly.
    """
    rng = np.random.default_rng(seed)
    lo, hi = characterized_vbb_range(twin, vdd)
    out = []
    for _ in range(n):
        corner = corners[int(rng.integers(len(corners)))]
        temp = float(temperatures[int(rng.integers(len(temperatures)))])
        env = ChipEnvironment(OperatingPoint(vdd, temp), float(rng.uniform(lo, hi)))
        die = twin.with_corner(corner)
        out.append(CalibrationSample(pmb_read(die, env, int(rng.integers(2 ** 63 - 1))), fmax_true(die, env),
                                     env.vbb, env.op, corner.value))
    return out


def characterize(twin: ChipTwin, vdd: float, awareness: Awareness, n: int = 3000,
                 seed: int = 0) -> LinearPmbModel:
    """Fit the model of one awareness level on tester data covering what it must span."""
    corners, temps = _conditions(twin, awareness)
    return fit_linear(tester_samples(twin, vdd, corners, temps, n, seed), awareness)


def prediction_error(model: LinearPmbModel, samples: Sequence[CalibrationSample]) -> float:
    """Worst-case relative prediction error of ``model`` over ``samples``."""
    if not samples:
        raise DomainError("prediction_error needs at least one sample")
    x = np.array([s.f_pmb for s in samples])
    y = np.array([s.f_max for s in samples])
    return float(np.max(np.abs(model.c_corr * x + model.f0 - y) / y))


def error_envelope(twin: ChipTwin, vdd: float, awareness: Awareness, n: int = 10_000,
                   seed: int = 0) -> tuple[LinearPmbModel, float]:
    """Characterize a model of ``awareness`` and measure its worst error on ``n`` fresh samples."""
    rng = np.random.default_rng(seed)
    fit_seed, eval_seed = (int(s) for s in rng.integers(0, 2 ** 63 - 1, size=2))
    model = characterize(twin, vdd, awareness, seed=fit_seed)
    corners, temps = _conditions(twin, awareness)
    return model, prediction_error(model, tester_samples(twin, vdd, corners, temps, n, eval_seed))

