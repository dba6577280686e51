"""Closed-loop body-bias regulation.

One regulation event reads the PMB, converts the reading to a frequency with
the linear PMB model, compares it with the set-point, runs a PID step, turns
the PID output into a body-bias change with the relative-gain model and
programs the generator with that bias plus the safety margin.  At most
``max_iterations`` reads per event; events repeat every ``regulation_period``.

The loop tracks a margin-free "base" bias.  Each reading is taken at the
applied (margined, quantized) bias, so the estimate is first referred back to
the base bias through the same relative-gain model before the error is formed;
otherwise the loop would try to cancel its own margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kvfile, tables
from .bb_gen import STEP, BbGenState, request_vbb
from .chip_twin import PMB_READ_TIME_S, ChipEnvironment, ChipTwin, pmb_read
from .errors import ConfigurationError, DomainError
from .margining import DEFAULT_POLICY, BbSlope, MarginPolicy
from .model_fit import Awareness, LinearPmbModel, predict_fmax


@dataclass(frozen=True)
class PidGains:
    kp: float = 1.0
    ki: float = 0.0
    kd: float = 0.0
    integral_clamp: float = 50.0  # MHz * iterations

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise DomainError("PID gains must be >= 0")
        if not self.integral_clamp > 0:
            raise DomainError("integral_clamp must be > 0")


# grid-search result, see bodybias.tuning
DEFAULT_GAINS = PidGains(kp=0.75, ki=0.0, kd=0.0, integral_clamp=50.0)


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    previous_error: float = 0.0


def pid_step(gains: PidGains, state: PidState, error: float) -> tuple[PidState, float]:
    """Positional PID with a clamped integral (anti-windup)."""
    if not math.isfinite(error):
        raise DomainError(f"PID error must be finite, got {error}")
    integral = min(max(state.integral + error, -gains.integral_clamp), gains.integral_clamp)
    correction = gains.kp * error + gains.ki * integral + gains.kd * (error - state.previous_error)
    return PidState(integral, error), correction


def freq_gap_to_dvbb(gap: float, current_fmax_est: float, slope: BbSlope) -> float:
    """Bias change that closes a frequency gap under the linear relative-gain model."""
    if not current_fmax_est > 0:
        raise DomainError(f"fmax estimate must be > 0, got {current_fmax_est}")
    return (gap / current_fmax_est) / slope.gain * 0.1


@dataclass(frozen=True)
class RegulationConfig:
    f_target: float
    model: LinearPmbModel
    slope: BbSlope
    margin: float = 0.0
    max_iterations: int = tables.MAX_ITERATIONS
    convergence_band: float | None = None
    regulation_period: float = tables.REGULATION_PERIOD_S
    gains: PidGains = DEFAULT_GAINS
    vbb_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.f_target > 0:
            raise ConfigurationError(f"f_target must be > 0, got {self.f_target}")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.margin < 0:
            raise ConfigurationError("margin must be >= 0")
        if not self.regulation_period > 0:
            raise ConfigurationError("regulation_period must be > 0")
        if not math.isclose(self.slope.vdd, self.model.vdd, abs_tol=1e-9):
            raise ConfigurationError(f"slope is for {self.slope.vdd} V but the model is for {self.model.vdd} V")

    @property
    def band(self) -> float:
        """Default: the frequency worth of one generator step at the set-point."""
        if self.convergence_band is not None:
            return self.convergence_band
        return self.f_target * self.slope.gain * (STEP / 0.1)

    def with_target(self, f_target: float) -> "RegulationConfig":
        return replace(self, f_target=f_target)


@dataclass(frozen=True)
class RegulationOutcome:
    converged: bool
    iterations: int
    applied_vbb: float
    elapsed: float          # seconds of simulated time spent in the event
    base_vbb: float
    pid: PidState
    bbgen: BbGenState
    f_pmb: float
    f_pred: float
    error: float
    trajectory: tuple[float, ...] = field(default=(), repr=False)


def _read_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2 ** 63 - 1, size=n)]


def regulate_once(config: RegulationConfig, pid: PidState, bbgen: BbGenState, twin: ChipTwin,
                  env: ChipEnvironment, seed: int, base_vbb: float | None = None) -> RegulationOutcome:
    """Run one regulation event at the operating point of ``env``.

    ``base_vbb`` is the margin-free bias carried over from the previous event;
    by default it is taken to be the generator's current output.
    """
    op = env.op
    if not math.isclose(op.vdd, config.model.vdd, abs_tol=1e-9):
        raise ConfigurationError(f"model is for {config.model.vdd} V, chip runs at {op.vdd} V")
    k = config.slope.per_volt
    lo, hi = config.vbb_bounds or (-math.inf, math.inf)
    base = bbgen.applied_vbb if base_vbb is None else base_vbb
    band = config.band
    elapsed = 0.0
    converged = False
    f_pmb = f_pred = err = math.nan
    iterations = 0
    trajectory = []
    for read_seed in _read_seeds(seed, config.max_iterations):
        applied = bbgen.applied_vbb
        f_pmb = pmb_read(twin, ChipEnvironment(op, applied), read_seed)
        elapsed += PMB_READ_TIME_S
        iterations += 1
        f_pred = predict_fmax(config.model, f_pmb)
        f_est = f_pred * (1.0 + k * base) / (1.0 + k * applied)
        err = config.f_target - f_est
        pid, correction = pid_step(config.gains, pid, err)
        base = min(max(base + freq_gap_to_dvbb(correction, f_est, config.slope), lo - config.margin), hi)
        before = bbgen.cumulative_busy_time
        bbgen, applied = request_vbb(bbgen, base + config.margin, config.vbb_bounds)
        elapsed += (bbgen.cumulative_busy_time - before) * 1e-6
        trajectory.append(applied)
        if abs(err) <= band:
            converged = True
            break
    return RegulationOutcome(converged, iterations, bbgen.applied_vbb, elapsed, base, pid, bbgen,
                             f_pmb, f_pred, err, tuple(trajectory))


def on_new_setpoint(config: RegulationConfig, bbgen: BbGenState) -> BbGenState:
    """New set-point: drop straight back to zero bias before regulating again."""
    new, _ = request_vbb(bbgen, 0.0, config.vbb_bounds)
    return new


# --- configuration file ----------------------------------------------------------

_PUBLISHED_MODELS = {
    Awareness.PROC_AWARE_TEMP_AWARE: tables.SINGLE_CHIP_MODEL,
    Awareness.PROC_AWARE_TEMP_UNAWARE: tables.TEMPERATURE_SPANNING_MODEL,
    Awareness.PROC_UNAWARE_TEMP_UNAWARE: tables.PROCESS_SPANNING_MODEL,
}

CONTROLLER_KEYS = ("vdd_v", "awareness", "f_target_mhz", "margin_mv", "kp", "ki", "kd", "integral_clamp_mhz",
                   "regulation_period_s", "max_iterations", "convergence_band_mhz", "c_corr", "f0_mhz")


def published_model(awareness: Awareness, vdd: float) -> LinearPmbModel:
    """Measured model of an awareness level; supplies without one fall back to the single-chip model."""
    table = _PUBLISHED_MODELS[awareness]
    if vdd not in table:
        table = tables.SINGLE_CHIP_MODEL
    c, f0, r2 = table[vdd]
    return LinearPmbModel(c, f0, r2, awareness=awareness, vdd=vdd)


def controller_from_kv(values, policy: MarginPolicy = DEFAULT_POLICY) -> tuple[RegulationConfig, Awareness]:
    """Build a controller from key/values.

    The awareness level selects the published model and the policy margin;
    ``c_corr``/``f0_mhz`` and ``margin_mv`` override them (e.g. with a freshly
    calibrated model).
    """
    unknown = set(values) - set(CONTROLLER_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown controller key(s): {', '.join(sorted(unknown))}")
    try:
        vdd = float(values.get("vdd_v", 0.7))
        awareness = Awareness.parse(str(values.get("awareness", Awareness.PROC_AWARE_TEMP_UNAWARE.value)))
        model = published_model(awareness, vdd)
        if "c_corr" in values or "f0_mhz" in values:
            model = replace(model, c_corr=float(values.get("c_corr", model.c_corr)),
                            f0=float(values.get("f0_mhz", model.f0)))
        margin = (float(values["margin_mv"]) / 1000 if "margin_mv" in values
                  else policy.lookup(awareness, vdd).vbb_margin)
        gains = PidGains(float(values.get("kp", DEFAULT_GAINS.kp)), float(values.get("ki", DEFAULT_GAINS.ki)),
                         float(values.get("kd", DEFAULT_GAINS.kd)),
                         float(values.get("integral_clamp_mhz", DEFAULT_GAINS.integral_clamp)))
        band = values.get("convergence_band_mhz")
        config = RegulationConfig(
            f_target=float(values.get("f_target_mhz", tables.ANCHOR_F_25C_MHZ)), model=model,
            slope=BbSlope.default(vdd), margin=margin,
            max_iterations=int(values.get("max_iterations", tables.MAX_ITERATIONS)),
            convergence_band=None if band is None else float(band),
            regulation_period=float(values.get("regulation_period_s", tables.REGULATION_PERIOD_S)),
            gains=gains)
    except (ValueError, TypeError, DomainError) as exc:
        raise ConfigurationError(f"bad controller configuration: {exc}") from exc
    return config, awareness


def load_controller(path, policy: MarginPolicy = DEFAULT_POLICY) -> tuple[RegulationConfig, Awareness]:
    return controller_from_kv(kvfile.load(path), policy)


def controller_to_kv(config: RegulationConfig, awareness: Awareness) -> dict[str, object]:
    out: dict[str, object] = {
        "vdd_v": config.model.vdd, "awareness": awareness.value, "f_target_mhz": config.f_target,
        "margin_mv": round(config.margin * 1000, 9), "kp": config.gains.kp, "ki": config.gains.ki,
        "kd": config.gains.kd, "integral_clamp_mhz": config.gains.integral_clamp,
        "regulation_period_s": config.regulation_period, "max_iterations": config.max_iterations,
        "c_corr": config.model.c_corr, "f0_mhz": config.model.f0}
    if config.convergence_band is not None:
        out["convergence_band_mhz"] = config.convergence_band
    return out
