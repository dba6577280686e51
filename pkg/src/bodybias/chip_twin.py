"""Ground-truth physics of one simulated die.

The frequency surface is multiplicative-linear in process corner, temperature
and body bias; leakage is exponential in body bias and temperature.  The PMB
sensor is the inverse of the linear PMB model applied to a "sensed" frequency
that drifts from the true one with temperature and process corner, plus a
bounded uniform read error.

Units: volts, degrees Celsius, MHz, microamps, milliwatts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import kvfile, tables
from .errors import ConfigurationError, DomainError

T_REF = 25.0
T_MIN, T_MAX = -20.0, 80.0
VBB_ENV_MIN = -1.0
VBB_GRID = 0.05
PMB_READ_TIME_S = tables.PMB_READ_TIME_S

# the linear frequency surface is cut where it would fall below this fraction of nominal
_MIN_BB_FACTOR = 0.05


class ProcessCorner(enum.Enum):
    FAST = "Fast"
    TYPICAL = "Typical"
    SLOW = "Slow"

    @classmethod
    def parse(cls, text: str) -> "ProcessCorner":
        for c in cls:
            if c.value.lower() == str(text).strip().lower() or c.name.lower() == str(text).strip().lower():
                return c
        raise ConfigurationError(f"unknown process corner {text!r} (expected Fast, Typical or Slow)")


# slowest first: used as the safe tie-break order
CORNERS_SLOW_FIRST = (ProcessCorner.SLOW, ProcessCorner.TYPICAL, ProcessCorner.FAST)


@dataclass(frozen=True)
class OperatingPoint:
    vdd: float
    temperature: float

    def __post_init__(self):
        if not any(math.isclose(self.vdd, v, abs_tol=1e-9) for v in tables.SUPPLIES):
            raise DomainError(f"vdd={self.vdd} V is not a characterized supply {tables.SUPPLIES}")
        if not (T_MIN <= self.temperature <= T_MAX):
            raise DomainError(f"temperature={self.temperature} C outside [{T_MIN}, {T_MAX}]")
        object.__setattr__(self, "vdd", snap_vdd(self.vdd))


@dataclass(frozen=True)
class ChipEnvironment:
    op: OperatingPoint
    vbb: float = 0.0

    def __post_init__(self):
        hi = vbb_max(self.op.vdd)
        if not (VBB_ENV_MIN - 1e-12 <= self.vbb <= hi + 1e-12):
            raise DomainError(f"vbb={self.vbb} V outside [{VBB_ENV_MIN}, {hi}] at vdd={self.op.vdd} V")

    @classmethod
    def at(cls, vdd: float, temperature: float, vbb: float = 0.0) -> "ChipEnvironment":
        return cls(OperatingPoint(vdd, temperature), vbb)


def vbb_max(vdd: float) -> float:
    """Full forward bias: half the supply plus 300 mV."""
    return round(vdd / 2 + 0.3, 9)


def snap_vdd(vdd: float) -> float:
    for v in tables.SUPPLIES:
        if math.isclose(vdd, v, abs_tol=1e-9):
            return v
    raise DomainError(f"vdd={vdd} V is not a characterized supply {tables.SUPPLIES}")


# Non-published defaults are marked "calibrated" or "default" in TWIN_PROVENANCE.
_TEMP_COEFF_07 = (1 - tables.ANCHOR_F_TARGET_MHZ / tables.ANCHOR_F_25C_MHZ) / (T_REF - tables.ANCHOR_T_NO_FBB_C)
_LEAK_T_SLOPE = (T_MAX - T_REF) / math.log(2.0)


@dataclass(frozen=True)
class ChipTwin:
    """Parameters of one simulated die; per-supply tables are keyed by vdd."""

    corner: ProcessCorner = ProcessCorner.TYPICAL
    f_base: Mapping[float, float] = field(default_factory=lambda: {0.5: 75.0, 0.7: tables.ANCHOR_F_25C_MHZ, 0.9: 300.0})
    bb_slope: Mapping[float, float] = field(default_factory=lambda: dict(tables.BB_GAIN_PER_100MV))
    temp_coeff: Mapping[float, float] = field(default_factory=lambda: {0.5: 0.006, 0.7: _TEMP_COEFF_07, 0.9: 0.0015})
    leak_i0: Mapping[float, float] = field(default_factory=lambda: {0.5: 1200.0, 0.7: 2000.0, 0.9: 3500.0})
    leak_v_slope: float = 0.6166
    leak_t_slope: float = _LEAK_T_SLOPE
    c_eff: float = 0.0
    pmb_c_corr: Mapping[float, float] = field(
        default_factory=lambda: {v: tables.SINGLE_CHIP_MODEL[v][0] for v in tables.SUPPLIES})
    pmb_f0: Mapping[float, float] = field(
        default_factory=lambda: {v: tables.SINGLE_CHIP_MODEL[v][1] for v in tables.SUPPLIES})
    pmb_err_bound: Mapping[float, float] = field(
        default_factory=lambda: {v: tables.MARGIN_POLICY["ProcAwareTempAware"][v][0] for v in tables.SUPPLIES})
    pmb_temp_skew: Mapping[float, float] = field(default_factory=lambda: {0.5: 0.0, 0.7: 0.0, 0.9: 0.0})
    pmb_corner_skew: Mapping[float, float] = field(default_factory=lambda: {0.5: 0.0, 0.7: 0.0, 0.9: 0.0})
    corner_speed: Mapping[ProcessCorner, float] = field(default_factory=lambda: {
        ProcessCorner.FAST: 1.06, ProcessCorner.TYPICAL: 1.0, ProcessCorner.SLOW: 0.94})

    def __post_init__(self):
        for name in ("f_base", "bb_slope", "temp_coeff", "leak_i0", "pmb_c_corr", "pmb_f0",
                     "pmb_err_bound", "pmb_temp_skew", "pmb_corner_skew"):
            table = {snap_vdd(float(k)): float(v) for k, v in dict(getattr(self, name)).items()}
            object.__setattr__(self, name, MappingProxyType(table))
        speeds = {ProcessCorner.parse(k.value if isinstance(k, ProcessCorner) else k): float(v)
                  for k, v in dict(self.corner_speed).items()}
        object.__setattr__(self, "corner_speed", MappingProxyType(speeds))
        if self.corner_speed.get(ProcessCorner.TYPICAL) != 1.0:
            raise ConfigurationError("corner speed factor of Typical must be exactly 1.0")
        if not (self.corner_speed[ProcessCorner.FAST] > 1.0 > self.corner_speed[ProcessCorner.SLOW]):
            raise ConfigurationError("corner speed factors must satisfy Fast > 1.0 > Slow")
        for vdd, s in self.bb_slope.items():
            if s <= 0:
                raise ConfigurationError(f"bb_slope[{vdd}] must be > 0")
        for vdd, c in self.temp_coeff.items():
            if c < 0:
                raise ConfigurationError(f"temp_coeff[{vdd}] must be >= 0")
        for vdd, i0 in self.leak_i0.items():
            if i0 <= 0:
                raise ConfigurationError(f"leak_i0[{vdd}] must be > 0")
        if self.leak_v_slope <= 0 or self.leak_t_slope <= 0:
            raise ConfigurationError("leak_v_slope and leak_t_slope must be > 0")
        if self.c_eff < 0:
            raise ConfigurationError("c_eff must be >= 0")
        for vdd, b in self.pmb_err_bound.items():
            if b < 0:
                raise ConfigurationError(f"pmb_err_bound[{vdd}] must be >= 0")

    def param(self, name: str, vdd: float) -> float:
        table = getattr(self, name)
        try:
            return table[snap_vdd(vdd)]
        except KeyError:
            raise DomainError(f"twin has no {name} entry for vdd={vdd} V") from None

    def with_corner(self, corner: ProcessCorner) -> "ChipTwin":
        return replace(self, corner=corner)

    def noiseless(self) -> "ChipTwin":
        """Same die without random read error; the sensor's systematic drift is kept."""
        return replace(self, pmb_err_bound={v: 0.0 for v in self.pmb_err_bound})


def _bb_factor(twin: ChipTwin, vdd: float, vbb: float) -> float:
    return 1.0 + twin.param("bb_slope", vdd) * (vbb / 0.1)


def vbb_floor(twin: ChipTwin, vdd: float) -> float:
    """Lowest on-grid bias inside the environment range where the linear surface stays valid."""
    slope = twin.param("bb_slope", vdd) / 0.1
    cut = (_MIN_BB_FACTOR - 1.0) / slope
    steps = math.ceil(cut / VBB_GRID - 1e-9)
    return max(VBB_ENV_MIN, round(steps * VBB_GRID, 9))


def vbb_range(twin: ChipTwin, vdd: float) -> tuple[float, float]:
    return vbb_floor(twin, vdd), vbb_max(vdd)


def fmax_true(twin: ChipTwin, env: ChipEnvironment) -> float:
    """True maximum frequency [MHz]; strictly increasing in vbb and non-decreasing in temperature."""
    vdd, t = env.op.vdd, env.op.temperature
    bb = _bb_factor(twin, vdd, env.vbb)
    if bb < _MIN_BB_FACTOR - 1e-12:
        raise DomainError(f"vbb={env.vbb} V is below the twin's valid range at vdd={vdd} V "
                          f"(floor {vbb_floor(twin, vdd)} V)")
    return (twin.param("f_base", vdd) * twin.corner_speed[twin.corner]
            * (1.0 + twin.param("temp_coeff", vdd) * (t - T_REF)) * bb)


def leakage(twin: ChipTwin, env: ChipEnvironment) -> float:
    """Leakage current [uA]."""
    return (twin.param("leak_i0", env.op.vdd) * math.exp(env.vbb / twin.leak_v_slope)
            * math.exp((env.op.temperature - T_REF) / twin.leak_t_slope))


def dynamic_power(twin: ChipTwin, op: OperatingPoint, freq: float) -> float:
    """Switching power [mW] = c_eff [nF] * vdd^2 * f [MHz]."""
    if freq < 0:
        raise DomainError(f"frequency must be >= 0, got {freq} MHz")
    return twin.c_eff * op.vdd ** 2 * freq


def leakage_power(twin: ChipTwin, env: ChipEnvironment) -> float:
    """Leakage power [mW]."""
    return leakage(twin, env) * env.op.vdd * 1e-3


def total_power(twin: ChipTwin, env: ChipEnvironment, freq: float) -> float:
    return dynamic_power(twin, env.op, freq) + leakage_power(twin, env)


def sensor_skew(twin: ChipTwin, op: OperatingPoint) -> float:
    """Multiplicative drift of the sensed frequency w.r.t. the true one.

    The ring oscillators under-track process corners (a slow die reads fast,
    a fast die reads slow) and drift slowly with temperature.
    """
    corner_sign = {ProcessCorner.SLOW: 1.0, ProcessCorner.TYPICAL: 0.0, ProcessCorner.FAST: -1.0}[twin.corner]
    return ((1.0 + corner_sign * twin.param("pmb_corner_skew", op.vdd))
            * (1.0 + twin.param("pmb_temp_skew", op.vdd) * (op.temperature - T_REF)))


def sensor_model(twin: ChipTwin, op: OperatingPoint) -> tuple[float, float]:
    """Exact (c_corr, f0) mapping this die's noiseless PMB reading to its true fmax at ``op``."""
    k = sensor_skew(twin, op)
    return twin.param("pmb_c_corr", op.vdd) / k, twin.param("pmb_f0", op.vdd) / k


def pmb_read(twin: ChipTwin, env: ChipEnvironment, rng_seed: int) -> float:
    """Raw PMB reading [MHz] for one read seeded by ``rng_seed``.

    The read error is drawn uniformly from +-pmb_err_bound and applied to the
    sensed frequency, so pushing the reading through the die's own linear
    model gives a relative prediction error bounded by pmb_err_bound.  A read
    takes ``PMB_READ_TIME_S``; the caller owns the clock.
    """
    vdd = env.op.vdd
    bound = twin.param("pmb_err_bound", vdd)
    eps = float(np.random.default_rng(rng_seed).uniform(-bound, bound)) if bound > 0 else 0.0
    sensed = fmax_true(twin, env) * sensor_skew(twin, env.op) * (1.0 + eps)
    return (sensed - twin.param("pmb_f0", vdd)) / twin.param("pmb_c_corr", vdd)


def c_eff_for_improvement(twin: ChipTwin, op: OperatingPoint, freq: float, vbb_on: float,
                          improvement: float) -> float:
    """Switched capacitance [nF] making total power with bias ``vbb_on`` lower than at
    zero bias by the fraction ``improvement`` (power balance solved for c_eff)."""
    if not 0 < improvement < 1:
        raise DomainError("improvement must be in (0, 1)")
    l_off = leakage_power(twin, ChipEnvironment(op, 0.0))
    l_on = leakage_power(twin, ChipEnvironment(op, vbb_on))
    if l_on >= l_off:
        raise DomainError("vbb_on must reduce leakage (reverse bias)")
    p_dyn = (l_off - l_on) / improvement - l_off
    if p_dyn <= 0:
        raise DomainError("requested improvement exceeds the leakage share")
    return p_dyn / (op.vdd ** 2 * freq)


# --- flat key/value I/O -------------------------------------------------------

_SCALARS = ("leak_v_slope", "leak_t_slope", "c_eff")
_TABLES = ("f_base", "bb_slope", "temp_coeff", "leak_i0", "pmb_c_corr", "pmb_f0",
           "pmb_err_bound", "pmb_temp_skew", "pmb_corner_skew")
_KEY_NAMES = {
    "f_base": "f_base_mhz", "bb_slope": "bb_slope_per_100mv", "temp_coeff": "temp_coeff_per_c",
    "leak_i0": "leak_i0_ua", "leak_v_slope": "leak_v_slope_v", "leak_t_slope": "leak_t_slope_c",
    "c_eff": "c_eff_nf", "pmb_c_corr": "pmb_c_corr", "pmb_f0": "pmb_f0_mhz",
    "pmb_err_bound": "pmb_err_bound", "pmb_temp_skew": "pmb_temp_skew_per_c",
    "pmb_corner_skew": "pmb_corner_skew",
}

TWIN_PROVENANCE = {
    "corner": "process corner of this die: Fast, Typical or Slow",
    "corner_speed": "die-to-die speed multipliers (default, +-6 % around typical)",
    "f_base_mhz": "true fmax at VBB = 0 V, 25 C; 0.7 V measured anchor, 0.5/0.9 V are defaults",
    "bb_slope_per_100mv": "relative fmax gain per 100 mV of body bias (measured)",
    "temp_coeff_per_c": "relative fmax gain per C; 0.7 V solved from 175 MHz @ 25 C and 170 MHz @ 17 C, others default",
    "leak_i0_ua": "leakage at VBB = 0 V, 25 C (default)",
    "leak_v_slope_v": "exponential VBB constant, least-squares fit to the 0.7 V margin overheads",
    "leak_t_slope_c": "exponential temperature constant (calibrated: 2x leakage from 25 C to 80 C)",
    "c_eff_nf": "effective switched capacitance (calibrated: ~15 % total-power gain at 80 C, 170 MHz, 0.7 V)",
    "pmb_c_corr": "sensor inverse-model slope, typical chip, 25 C (measured)",
    "pmb_f0_mhz": "sensor inverse-model offset, typical chip, 25 C (measured)",
    "pmb_err_bound": "max relative read error of a die-calibrated model at fixed temperature (measured)",
    "pmb_temp_skew_per_c": "sensor drift per C (calibrated to the temperature-unaware error)",
    "pmb_corner_skew": "sensor under-tracking of Fast/Slow corners (calibrated to the process-unaware error)",
}


def twin_to_kv(twin: ChipTwin) -> dict[str, object]:
    out: dict[str, object] = {"corner": twin.corner.value,
                              "corner_speed": {c.value: twin.corner_speed[c] for c in CORNERS_SLOW_FIRST}}
    for name in _TABLES:
        out[_KEY_NAMES[name]] = dict(getattr(twin, name))
    for name in _SCALARS:
        out[_KEY_NAMES[name]] = getattr(twin, name)
    return out


def twin_from_kv(values: Mapping[str, object], base: ChipTwin | None = None) -> ChipTwin:
    """Build a twin from parsed key/values; absent keys keep the values of ``base`` (defaults)."""
    base = base or default_twin()
    known = {"corner", "corner_speed"} | {_KEY_NAMES[n] for n in _TABLES + _SCALARS}
    unknown = set(values) - known
    if unknown:
        raise ConfigurationError(f"unknown twin parameter(s): {', '.join(sorted(unknown))}")
    kwargs: dict[str, object] = {}
    if "corner" in values:
        kwargs["corner"] = ProcessCorner.parse(str(values["corner"]))
    if "corner_speed" in values:
        merged = dict(base.corner_speed)
        merged.update({ProcessCorner.parse(k): float(v) for k, v in dict(values["corner_speed"]).items()})
        kwargs["corner_speed"] = merged
    for name in _TABLES:
        key = _KEY_NAMES[name]
        if key in values:
            if not isinstance(values[key], Mapping):
                raise ConfigurationError(f"{key} must be given per supply, e.g. {key}[0.7] = ...")
            merged = dict(getattr(base, name))
            merged.update({float(k): float(v) for k, v in values[key].items()})
            kwargs[name] = merged
    for name in _SCALARS:
        key = _KEY_NAMES[name]
        if key in values:
            kwargs[name] = float(values[key])
    return replace(base, **kwargs)


def load_twin(path) -> ChipTwin:
    return twin_from_kv(kvfile.load(path))


def default_twin_text() -> str:
    twin = default_twin()
    return kvfile.dump(twin_to_kv(twin), TWIN_PROVENANCE,
                       header=["digital twin parameters (name = value, volts / C / MHz / uA / nF)"])


def default_twin(corner: ProcessCorner = ProcessCorner.TYPICAL) -> ChipTwin:
    return ChipTwin(corner=corner, **_CALIBRATED)


# Frozen calibration results: skews from bodybias.tuning.tune_sensor_skews, c_eff from c_eff_for_improvement.
_CALIBRATED: dict[str, object] = {
    "pmb_temp_skew": {0.5: 0.0, 0.7: 1.07e-4, 0.9: 1.27e-4},
    "pmb_corner_skew": {0.5: 0.112, 0.7: 0.0553, 0.9: 0.0362},
    "c_eff": 0.041,
}
