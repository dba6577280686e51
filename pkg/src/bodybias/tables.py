"""Measured silicon characterization constants.

These are the measured values every default in the package is anchored to.
Percentages are stored as fractions, millivolts as volts.
"""

SUPPLIES = (0.9, 0.7, 0.5)

# PMB model on a single typical chip at 25 C: vdd -> (c_corr, f0 [MHz], r_square)
SINGLE_CHIP_MODEL = {
    0.9: (0.6, 8.72, 0.995),
    0.7: (0.59, 5.19, 0.998),
    0.5: (0.47, 3.21, 0.998),
}

# one chip fitted across -20, 25 and 80 C
TEMPERATURE_SPANNING_MODEL = {0.7: (0.59, 5.42, 0.996)}

# fast, typical and slow chips fitted together
PROCESS_SPANNING_MODEL = {0.7: (0.614, 6.86, 0.88)}

# relative frequency gain per 100 mV of body bias
BB_GAIN_PER_100MV = {0.5: 0.11, 0.7: 0.05, 0.9: 0.03}

# awareness -> vdd -> (frequency error, VBB margin [V], leakage overhead)
MARGIN_POLICY = {
    "ProcUnawareTempUnaware": {
        0.9: (0.066, 0.150, 0.33),
        0.7: (0.097, 0.150, 0.37),
        0.5: (0.25, 0.200, 0.66),
    },
    "ProcAwareTempUnaware": {
        0.9: (0.03, 0.100, 0.13),
        0.7: (0.04, 0.100, 0.14),
        0.5: (0.07, 0.100, 0.15),
    },
    "ProcAwareTempAware": {
        0.9: (0.02, 0.050, 0.09),
        0.7: (0.03, 0.050, 0.10),
        0.5: (0.06, 0.050, 0.12),
    },
}

# body-bias generator datasheet
BBGEN = {
    "area_mm2": 0.00913,
    "power_uw": 4.15,
    "transition_time_nwell_us": 23.0,
    "transition_time_pwell_us": 11.5,
    "transition_energy_nj": 25.0,
    "step_v": 0.05,
    "vbb_min_v": -1.5,
    "vbb_max_above_half_vdd_v": 0.3,
}

# on-board regulation loop
REGULATION_PERIOD_S = 2.0
MAX_ITERATIONS = 16
PMB_READ_TIME_S = 0.004

# boot calibration as run on the evaluation board
CALIBRATION_VBB_STEP_V = 0.05
CALIBRATION_POINTS = 30
CALIBRATION_FREQ_STEP_MHZ = 1.0
CALIBRATION_BENCHMARK_ITERATIONS = 10000
CALIBRATION_START_MHZ = 100.0
CALIBRATION_DURATION_S = 6.0

# operating-point anchors used to place the frequency surface
ANCHOR_F_25C_MHZ = 175.0          # set-point "very close" to the typical chip's maximum at 0.7 V
ANCHOR_F_TARGET_MHZ = 170.0       # temperature-tracking target at 0.7 V
ANCHOR_T_NO_FBB_C = 17.0          # below this, 170 MHz needs forward bias
PROCESS_ERROR_SHARE = 0.057       # process-variation share of the 9.7 % process-unaware error
CHARACTERIZED_TEMPERATURES = (-20.0, 25.0, 80.0)


def render() -> str:
    """CSV rendering used by ``bodybias tables``."""
    lines = ["# PMB model, single typical chip, 25 C", "vdd_v,c_corr,f0_mhz,r_square"]
    for vdd in SUPPLIES:
        c, f0, r2 = SINGLE_CHIP_MODEL[vdd]
        lines.append(f"{vdd},{c},{f0},{r2}")
    lines += ["", "# PMB model, single chip, -20/25/80 C", "vdd_v,c_corr,f0_mhz,r_square"]
    for vdd, (c, f0, r2) in TEMPERATURE_SPANNING_MODEL.items():
        lines.append(f"{vdd},{c},{f0},{r2}")
    lines += ["", "# PMB model, fast/typical/slow chips, -20/25/80 C", "vdd_v,c_corr,f0_mhz,r_square"]
    for vdd, (c, f0, r2) in PROCESS_SPANNING_MODEL.items():
        lines.append(f"{vdd},{c},{f0},{r2}")
    lines += ["", "# body-bias induced performance gain", "vdd_v,gain_pct_per_100mv"]
    for vdd in (0.5, 0.7, 0.9):
        lines.append(f"{vdd},{_pct(BB_GAIN_PER_100MV[vdd])}")
    lines += ["", "# frequency error, VBB margin and leakage overhead per model awareness",
              "awareness,vdd_v,f_err_pct,margin_mv,overhead_pct"]
    for awareness, rows in MARGIN_POLICY.items():
        for vdd in SUPPLIES:
            err, margin, overhead = rows[vdd]
            lines.append(f"{awareness},{vdd},{_pct(err)},{round(margin * 1000)},{_pct(overhead)}")
    lines += ["", "# body-bias generator", "feature,value"]
    for key, value in BBGEN.items():
        lines.append(f"{key},{value}")
    return "\n".join(lines) + "\n"


def _pct(x: float) -> str:
    return f"{round(x * 100, 6):g}"
