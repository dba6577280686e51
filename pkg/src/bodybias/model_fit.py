"""Linear PMB models: ``f_max = c_corr * f_pmb + f0``.

Fitting is plain ordinary least squares on (f_pmb -> f_max).  Three model
flavours exist, distinguished only by what data they were fitted on, which is
recorded in :class:`Awareness`.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kvfile
from .chip_twin import CORNERS_SLOW_FIRST, OperatingPoint, ProcessCorner, default_twin
from .errors import ConfigurationError, DegenerateFitError, DomainError

SAMPLE_HEADER = ("chip_id", "vdd_v", "temp_c", "vbb_v", "f_pmb_mhz", "f_max_mhz")


class Awareness(enum.Enum):
    """What the model conditions on, from most to least informed."""

    PROC_AWARE_TEMP_AWARE = "ProcAwareTempAware"
    PROC_AWARE_TEMP_UNAWARE = "ProcAwareTempUnaware"
    PROC_UNAWARE_TEMP_UNAWARE = "ProcUnawareTempUnaware"

    @classmethod
    def parse(cls, text: str) -> "Awareness":
        key = str(text).strip().replace("-", "").replace("_", "").replace("/", "").lower()
        for a in cls:
            if a.value.lower() == key or a.name.replace("_", "").lower() == key:
                return a
        raise ConfigurationError(f"unknown awareness level {text!r}; expected one of "
                                 + ", ".join(a.value for a in cls))


@dataclass(frozen=True)
class CalibrationSample:
    f_pmb: float
    f_max: float
    vbb: float
    op: OperatingPoint
    chip_id: str = "chip0"

    def __post_init__(self):
        if not (self.f_pmb > 0 and self.f_max > 0):
            raise DomainError(f"sample needs f_pmb > 0 and f_max > 0, got {self.f_pmb}, {self.f_max}")


@dataclass(frozen=True)
class LinearPmbModel:
    c_corr: float
    f0: float
    r_square: float = 1.0
    max_rel_error: float = 0.0
    awareness: Awareness = Awareness.PROC_AWARE_TEMP_AWARE
    vdd: float = 0.7

    def __post_init__(self):
        if not self.c_corr > 0:
            raise DomainError(f"c_corr must be > 0, got {self.c_corr}")
        if self.max_rel_error < 0 or self.r_square > 1 + 1e-12:
            raise DomainError("max_rel_error must be >= 0 and r_square <= 1")


def predict_fmax(model: LinearPmbModel, f_pmb: float) -> float:
    return model.c_corr * f_pmb + model.f0


def _columns(samples: Sequence[CalibrationSample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.fromiter((s.f_pmb for s in samples), float, len(samples))
    y = np.fromiter((s.f_max for s in samples), float, len(samples))
    return x, y


def ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Slope and intercept of the least-squares line through (x, y)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 2 or np.unique(x).size < 2:
        raise DegenerateFitError("need at least two distinct f_pmb values to fit a line")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    slope = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    return slope, float(ym - slope * xm)


def _stats(c: float, f0: float, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    pred = c * x + f0
    max_rel = float(np.max(np.abs(pred - y) / y))
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return max_rel, r2


def fit_linear(samples: Sequence[CalibrationSample],
               awareness: Awareness = Awareness.PROC_AWARE_TEMP_AWARE) -> LinearPmbModel:
    """Fit ``f_max = c_corr * f_pmb + f0``; r_square and max_rel_error are over the fitting set."""
    samples = list(samples)
    x, y = _columns(samples)
    c, f0 = ols(x, y)
    if c <= 0:
        raise DegenerateFitError(f"fitted slope {c:.4g} is not positive")
    max_rel, r2 = _stats(c, f0, x, y)
    vdds = {s.op.vdd for s in samples}
    return LinearPmbModel(c, f0, r2, max_rel, awareness, vdds.pop() if len(vdds) == 1 else samples[0].op.vdd)


def residual_stats(model: LinearPmbModel, samples: Sequence[CalibrationSample]) -> tuple[float, float]:
    """(max relative error, coefficient of determination) of ``model`` on ``samples``."""
    samples = list(samples)
    if not samples:
        raise DomainError("residual_stats needs at least one sample")
    x, y = _columns(samples)
    return _stats(model.c_corr, model.f0, x, y)


def sq_error(c: float, f0: float, samples: Sequence[CalibrationSample]) -> float:
    x, y = _columns(list(samples))
    return float(np.sum((c * x + f0 - y) ** 2))


def disagreement(a: LinearPmbModel, b: LinearPmbModel, lo: float, hi: float) -> float:
    """Mean squared prediction difference of two lines over f_pmb in [lo, hi] (closed form)."""
    dc, df = a.c_corr - b.c_corr, a.f0 - b.f0
    if hi <= lo:
        return (dc * lo + df) ** 2
    # mean of (dc*x + df)^2 over a uniform interval
    return dc * dc * (hi ** 2 + hi * lo + lo ** 2) / 3 + dc * df * (hi + lo) + df * df


def classify_corner(calibrated: LinearPmbModel,
                    reference_models: Mapping[ProcessCorner, LinearPmbModel],
                    f_pmb_range: tuple[float, float] | None = None) -> ProcessCorner:
    """Corner whose reference model disagrees least with ``calibrated``.

    Near-ties resolve to the slower corner, the safe assumption.
    """
    missing = [c.value for c in CORNERS_SLOW_FIRST if c not in reference_models]
    if missing:
        raise ConfigurationError(f"reference models missing for corner(s): {', '.join(missing)}")
    for corner, ref in reference_models.items():
        if not math.isclose(ref.vdd, calibrated.vdd, abs_tol=1e-9):
            raise ConfigurationError(f"reference model for {corner.value} is at {ref.vdd} V, "
                                     f"calibrated model at {calibrated.vdd} V")
    lo, hi = f_pmb_range or default_f_pmb_range(calibrated)
    scores = [(disagreement(calibrated, reference_models[c], lo, hi), c) for c in CORNERS_SLOW_FIRST]
    best = min(s for s, _ in scores)
    tol = 1e-12 * max(1.0, best)
    for score, corner in scores:
        if score <= best + tol:
            return corner
    raise AssertionError("unreachable")


def default_f_pmb_range(model: LinearPmbModel) -> tuple[float, float]:
    # readings spanning 0.4x..1.5x the nominal die frequency at this supply
    f_nom = default_twin().param("f_base", model.vdd)
    lo = (0.4 * f_nom - model.f0) / model.c_corr
    hi = (1.5 * f_nom - model.f0) / model.c_corr
    return max(lo, 0.0), hi


# --- I/O -----------------------------------------------------------------------

def write_samples(samples: Iterable[CalibrationSample], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_HEADER)
        for s in samples:
            w.writerow([s.chip_id, s.op.vdd, s.op.temperature, repr(round(s.vbb, 9)),
                        repr(s.f_pmb), repr(s.f_max)])


def read_samples(path) -> list[CalibrationSample]:
    p = Path(path)
    try:
        fh = p.open(newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {p}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SAMPLE_HEADER:
            raise ConfigurationError(f"{p}: expected header {','.join(SAMPLE_HEADER)}")
        out = []
        for row in reader:
            try:
                out.append(CalibrationSample(
                    f_pmb=float(row["f_pmb_mhz"]), f_max=float(row["f_max_mhz"]), vbb=float(row["vbb_v"]),
                    op=OperatingPoint(float(row["vdd_v"]), float(row["temp_c"])), chip_id=row["chip_id"]))
            except ValueError as exc:
                raise ConfigurationError(f"{p}:{reader.line_num}: {exc}") from exc
    return out


def model_to_kv(model: LinearPmbModel) -> dict[str, object]:
    return {"c_corr": model.c_corr, "f0_mhz": model.f0, "r_square": model.r_square,
            "max_rel_error": model.max_rel_error, "awareness": model.awareness.value, "vdd_v": model.vdd}


def model_from_kv(values: Mapping[str, object]) -> LinearPmbModel:
    return LinearPmbModel(
        c_corr=kvfile.require(values, "c_corr"), f0=kvfile.require(values, "f0_mhz"),
        r_square=float(values.get("r_square", 1.0)), max_rel_error=float(values.get("max_rel_error", 0.0)),
        awareness=Awareness.parse(str(values.get("awareness", Awareness.PROC_AWARE_TEMP_AWARE.value))),
        vdd=kvfile.require(values, "vdd_v"))


def with_awareness(model: LinearPmbModel, awareness: Awareness) -> LinearPmbModel:
    return replace(model, awareness=awareness)
