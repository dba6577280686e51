"""Frequency-error bounds to forward-body-bias safety margins.

Two margin sources coexist.  :func:`margin_from_error` derives a margin from an
error budget through the body-bias sensitivity; :class:`MarginPolicy` holds the
measured per-awareness margins the controller uses by default.  The two do not
agree everywhere (9.7 % at 0.7 V maps to 225 mV summed per term, 194 mV raw,
while the measured policy uses 150 mV); both are exposed as-is.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from scipy.optimize import minimize_scalar

from . import tables
from .chip_twin import snap_vdd
from .errors import ConfigurationError, DomainError, LookupFailure
from .model_fit import Awareness

MARGIN_GRID = 0.025
POLICY_HEADER = ("awareness", "vdd", "f_err", "margin_mv", "overhead_pct")


@dataclass(frozen=True)
class BbSlope:
    """Relative fmax gain per 100 mV of body bias at one supply."""

    vdd: float
    gain: float

    def __post_init__(self):
        if not self.gain > 0:
            raise DomainError(f"body-bias gain must be > 0, got {self.gain}")

    @classmethod
    def default(cls, vdd: float) -> "BbSlope":
        v = snap_vdd(vdd)
        return cls(v, tables.BB_GAIN_PER_100MV[v])

    @property
    def per_volt(self) -> float:
        return self.gain / 0.1


def margin_from_error(err: float, slope: BbSlope, granularity: float = MARGIN_GRID) -> float:
    """Smallest grid-aligned bias that covers a relative frequency error ``err``.

    Always rounds up: an under-margined chip fails, an over-margined one only leaks more.
    """
    if err < 0:
        raise DomainError(f"frequency error must be >= 0, got {err}")
    if granularity <= 0:
        raise DomainError("granularity must be > 0")
    raw = err / slope.gain * 0.1
    steps = math.ceil(raw / granularity - 1e-9)
    return round(steps * granularity, 12)


def compose_margins(margins: Iterable[float]) -> float:
    """Independent error sources are covered by the sum of their individual margins."""
    ms = list(margins)
    if any(m < 0 for m in ms):
        raise DomainError("margins must be >= 0")
    return round(math.fsum(ms), 12)


@dataclass(frozen=True)
class PolicyEntry:
    f_err: float
    vbb_margin: float
    leakage_overhead: float


@dataclass(frozen=True)
class MarginPolicy:
    entries: Mapping[tuple[Awareness, float], PolicyEntry] = field(default_factory=dict)

    def lookup(self, awareness: Awareness, vdd: float) -> PolicyEntry:
        try:
            return self.entries[(awareness, snap_vdd(vdd))]
        except (KeyError, DomainError):
            raise LookupFailure(f"no margin policy for {awareness.value} at vdd={vdd} V") from None

    def check_monotone(self) -> None:
        """Margins must not shrink as awareness decreases."""
        order = list(Awareness)
        vdds = {v for _, v in self.entries}
        for vdd in vdds:
            rows = [self.entries[(a, vdd)] for a in order if (a, vdd) in self.entries]
            for better, worse in zip(rows, rows[1:]):
                if worse.vbb_margin < better.vbb_margin:
                    raise ConfigurationError(f"policy margins decrease with lower awareness at {vdd} V")
            for row in rows:
                if min(row.f_err, row.vbb_margin, row.leakage_overhead) <= 0:
                    raise ConfigurationError(f"policy entries must be positive at {vdd} V")


def default_policy() -> MarginPolicy:
    entries = {}
    for name, rows in tables.MARGIN_POLICY.items():
        for vdd, (err, margin, overhead) in rows.items():
            entries[(Awareness(name), vdd)] = PolicyEntry(err, margin, overhead)
    return MarginPolicy(entries)


DEFAULT_POLICY = default_policy()


def policy_lookup(awareness: Awareness, vdd: float,
                  policy: MarginPolicy = DEFAULT_POLICY) -> tuple[float, float, float]:
    e = policy.lookup(awareness, vdd)
    return e.f_err, e.vbb_margin, e.leakage_overhead


def load_policy(path, base: MarginPolicy = DEFAULT_POLICY) -> MarginPolicy:
    """Read a policy override CSV (percent and millivolt units); rows replace the defaults."""
    p = Path(path)
    try:
        fh = p.open(newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {p}: {exc.strerror or exc}") from exc
    entries = dict(base.entries)
    with fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != POLICY_HEADER:
            raise ConfigurationError(f"{p}: expected header {','.join(POLICY_HEADER)}")
        for row in reader:
            try:
                key = (Awareness.parse(row["awareness"]), snap_vdd(float(row["vdd"])))
                entries[key] = PolicyEntry(float(row["f_err"]) / 100, float(row["margin_mv"]) / 1000,
                                           float(row["overhead_pct"]) / 100)
            except (ValueError, DomainError) as exc:
                raise ConfigurationError(f"{p}:{reader.line_num}: {exc}") from exc
    policy = MarginPolicy(entries)
    policy.check_monotone()
    return policy


def fit_leak_v_slope(margins, overheads) -> float:
    """Exponential VBB constant minimizing squared relative error of ``exp(m/s) - 1`` against
    the measured overheads."""
    pairs = list(zip(margins, overheads))

    def cost(s: float) -> float:
        return math.fsum(((math.expm1(m / s) - ov) / ov) ** 2 for m, ov in pairs)

    res = minimize_scalar(cost, bounds=(0.05, 5.0), method="bounded", options={"xatol": 1e-10})
    return float(res.x)


def overhead_pairs(vdd: float = 0.7) -> tuple[list[float], list[float]]:
    v = snap_vdd(vdd)
    rows = [DEFAULT_POLICY.lookup(a, v) for a in Awareness]
    return [r.vbb_margin for r in rows], [r.leakage_overhead for r in rows]
