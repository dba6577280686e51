"""On-chip body-bias generator: 50 mV quantization, range clamp, cost accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from . import tables
from .errors import DomainError

STEP = tables.BBGEN["step_v"]
_EPS = 1e-9


@dataclass(frozen=True)
class BbGenConfig:
    vbb_min: float = tables.BBGEN["vbb_min_v"]
    above_half_vdd: float = tables.BBGEN["vbb_max_above_half_vdd_v"]
    transition_time_nwell_us: float = tables.BBGEN["transition_time_nwell_us"]
    transition_time_pwell_us: float = tables.BBGEN["transition_time_pwell_us"]
    transition_energy_nj: float = tables.BBGEN["transition_energy_nj"]
    idle_power_uw: float = tables.BBGEN["power_uw"]

    @property
    def transition_time_us(self) -> float:
        # wells are assumed to settle in parallel
        return max(self.transition_time_nwell_us, self.transition_time_pwell_us)


DEFAULT_CONFIG = BbGenConfig()


@dataclass(frozen=True)
class BbGenState:
    """Generator output held as an integer count of 50 mV steps so the grid is exact."""

    steps: int
    vdd: float
    cumulative_transition_energy: float = 0.0   # nJ
    cumulative_busy_time: float = 0.0           # us
    transitions: int = 0
    config: BbGenConfig = DEFAULT_CONFIG

    @classmethod
    def initial(cls, vdd: float, config: BbGenConfig = DEFAULT_CONFIG) -> "BbGenState":
        return cls(0, vdd, config=config)

    @property
    def applied_vbb(self) -> float:
        return round(self.steps * STEP, 9)

    def step_range(self) -> tuple[int, int]:
        lo = math.ceil(self.config.vbb_min / STEP - _EPS)
        hi = math.floor((self.vdd / 2 + self.config.above_half_vdd) / STEP + _EPS)
        return lo, hi


def quantize(target: float, lo_steps: int, hi_steps: int) -> int:
    """Step count for ``target``: clamp, then round up unless that leaves the range."""
    if not math.isfinite(target):
        raise DomainError(f"body-bias target must be finite, got {target}")
    up = math.ceil(target / STEP - _EPS)
    if up > hi_steps:
        return hi_steps
    if up < lo_steps:
        return lo_steps
    return up


def request_vbb(state: BbGenState, target: float,
                bounds: tuple[float, float] | None = None) -> tuple[BbGenState, float]:
    """Program the generator toward ``target`` volts.

    ``bounds`` optionally narrows the generator range (e.g. to the die's
    characterized range); clamping is silent and visible in the returned value.
    A request that lands on the current output costs nothing.
    """
    lo, hi = state.step_range()
    if bounds is not None:
        lo = max(lo, math.ceil(bounds[0] / STEP - _EPS))
        hi = min(hi, math.floor(bounds[1] / STEP + _EPS))
    steps = quantize(target, lo, hi)
    if steps == state.steps:
        return state, state.applied_vbb
    cfg = state.config
    new = replace(state, steps=steps,
                  cumulative_transition_energy=state.cumulative_transition_energy + cfg.transition_energy_nj,
                  cumulative_busy_time=state.cumulative_busy_time + cfg.transition_time_us,
                  transitions=state.transitions + 1)
    return new, new.applied_vbb


def idle_power(state: BbGenState, duration: float) -> float:
    """Energy [uJ] drawn by the duty-cycled generator over ``duration`` seconds."""
    if duration < 0:
        raise DomainError(f"duration must be >= 0, got {duration}")
    return state.config.idle_power_uw * duration
