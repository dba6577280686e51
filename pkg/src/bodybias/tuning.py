"""Offline tuning of the frozen defaults.

PID gains: grid search.  Objective: fewest PMB reads to settle after each step of the 175 -> 200 ->
100 -> 150 MHz schedule at 0.7 V, 25 C on the typical die, over a batch of
sensor-noise seeds, subject to every event converging and no tick undershooting.  Run ``python -m bodybias.tuning``
to regenerate the defaults frozen in :data:`bodybias.controller.DEFAULT_GAINS`.

Sensor skews: root-find the temperature drift so the temperature-unaware
envelope hits its bound, then the corner under-tracking so the process-unaware
envelope hits its bound.  ``python -m bodybias.tuning skews`` regenerates the
skews frozen in the default twin.
"""

from __future__ import annotations

import argparse
import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from . import tables
from .calibration import error_envelope
from .chip_twin import ChipTwin, default_twin
from .controller import PidGains, controller_from_kv
from .model_fit import Awareness
from .scenario import FREQUENCY_STEPS, SetpointSchedule, TemperatureProfile, energy_report, run_scenario

KP_GRID = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5)
KI_GRID = (0.0, 0.05, 0.1, 0.2)
KD_GRID = (0.0, 0.1, 0.25)


@dataclass(frozen=True)
class StepResponse:
    gains: PidGains
    mean_reads: float     # mean PMB reads of the first regulation after each set-point change
    converged: bool       # every regulation event converged within the iteration cap
    undershoot: bool      # some tick had fmax below the target


def step_response(gains: PidGains, seeds, twin: ChipTwin | None = None,
                  schedule: SetpointSchedule = FREQUENCY_STEPS, duration: float = 80.0) -> StepResponse:
    """Run the set-point step schedule at 0.7 V, 25 C once per seed."""
    twin = twin or default_twin()
    config, _ = controller_from_kv({"awareness": "ProcAwareTempAware"})
    config = replace(config, gains=gains)
    reads, converged, undershoot = [], True, False
    for seed in seeds:
        trace = run_scenario(twin, config, TemperatureProfile.constant(25.0), schedule, duration, seed)
        report = energy_report(trace)
        converged &= report.non_converged_events == 0
        undershoot |= report.undershoot_ticks > 0
        for r in trace.records:
            if "setpoint" in r.event.split():
                reads.append(int(r.event.split("it=")[1].split()[0]))
    return StepResponse(gains, float(np.mean(reads)), converged, undershoot)


def grid_search(seeds=range(20), twin: ChipTwin | None = None) -> list[StepResponse]:
    """All grid points, best first: admissible (converged, no undershoot) before the rest,
    then fewest mean reads, then the smaller gains."""
    results = [step_response(PidGains(kp, ki, kd), seeds, twin)
               for kp, ki, kd in itertools.product(KP_GRID, KI_GRID, KD_GRID)]
    return sorted(results, key=lambda r: (not r.converged or r.undershoot, r.mean_reads,
                                          r.gains.kp + r.gains.ki + r.gains.kd))


def tune_sensor_skews(vdd: float, n: int = 4000, seeds=(0, 1),
                      twin: ChipTwin | None = None) -> tuple[float, float]:
    """(temperature skew, corner skew) matching the published error bounds at ``vdd``.

    When the die-calibrated error alone already exceeds the temperature-unaware
    bound there is no root and the temperature skew is 0.
    """
    base = twin or default_twin()
    tu_bound = tables.MARGIN_POLICY["ProcAwareTempUnaware"][vdd][0]
    pu_bound = tables.MARGIN_POLICY["ProcUnawareTempUnaware"][vdd][0]

    def with_skews(temp_skew, corner_skew):
        return replace(base, pmb_temp_skew={**base.pmb_temp_skew, vdd: temp_skew},
                       pmb_corner_skew={**base.pmb_corner_skew, vdd: corner_skew})

    def envelope(t, awareness):
        return float(np.mean([error_envelope(t, vdd, awareness, n=n, seed=s)[1] for s in seeds]))

    def temp_gap(x):
        return envelope(with_skews(x, 0.0), Awareness.PROC_AWARE_TEMP_UNAWARE) - tu_bound

    temp_skew = brentq(temp_gap, 0.0, 1e-3, xtol=1e-6) if temp_gap(0.0) < 0 else 0.0
    corner_skew = brentq(lambda x: envelope(with_skews(temp_skew, x), Awareness.PROC_UNAWARE_TEMP_UNAWARE)
                         - pu_bound, 0.0, 0.3, xtol=1e-4)
    return temp_skew, corner_skew


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="python -m bodybias.tuning")
    parser.add_argument("what", nargs="?", choices=("gains", "skews"), default="gains")
    args = parser.parse_args(argv)
    if args.what == "skews":
        for vdd in tables.SUPPLIES:
            temp_skew, corner_skew = tune_sensor_skews(vdd)
            print(f"vdd={vdd} pmb_temp_skew={temp_skew:.3g} pmb_corner_skew={corner_skew:.3g}")
        return
    ranked = grid_search()
    for r in ranked[:10]:
        g = r.gains
        print(f"kp={g.kp} ki={g.ki} kd={g.kd} mean_reads={r.mean_reads:.3f} "
              f"converged={r.converged} undershoot={r.undershoot}")


if __name__ == "__main__":
    main()
