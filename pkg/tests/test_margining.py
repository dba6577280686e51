import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bodybias import margining as mg
from bodybias.errors import ConfigurationError, DomainError, LookupFailure
from bodybias.model_fit import Awareness

SLOPE_07 = mg.BbSlope.default(0.7)


def test_three_percent_needs_75_mv():
    assert mg.margin_from_error(0.03, SLOPE_07) == 0.075


def test_zero_error_zero_margin():
    assert mg.margin_from_error(0.0, SLOPE_07) == 0.0


def test_independent_errors_sum():
    # 3 % + 1 % + 5.7 % at 5 %/100 mV: 75 + 25 + 125 mV
    parts = [mg.margin_from_error(e, SLOPE_07) for e in (0.03, 0.01, 0.057)]
    assert parts == [0.075, 0.025, 0.125]
    assert mg.compose_margins(parts) == 0.225
    assert mg.margin_from_error(0.097, SLOPE_07) == 0.2
    with pytest.raises(DomainError):
        mg.compose_margins([0.1, -0.05])


@settings(max_examples=1000, deadline=None)
@given(st.floats(0, 0.5), st.sampled_from([0.5, 0.7, 0.9]))
def test_margin_is_smallest_covering_grid_point(err, vdd):
    slope = mg.BbSlope.default(vdd)
    m = mg.margin_from_error(err, slope)
    raw = err / slope.gain * 0.1
    assert abs(m / mg.MARGIN_GRID - round(m / mg.MARGIN_GRID)) < 1e-9
    assert m >= raw - 1e-9
    assert m - mg.MARGIN_GRID < raw + 1e-9


def test_negative_error_rejected():
    with pytest.raises(DomainError):
        mg.margin_from_error(-0.01, SLOPE_07)
    with pytest.raises(DomainError):
        mg.BbSlope(0.7, 0.0)


def test_policy_lookup_and_monotone():
    assert mg.policy_lookup(Awareness.PROC_AWARE_TEMP_UNAWARE, 0.7) == (0.04, 0.1, 0.14)
    assert mg.policy_lookup(Awareness.PROC_UNAWARE_TEMP_UNAWARE, 0.5) == (0.25, 0.2, 0.66)
    mg.DEFAULT_POLICY.check_monotone()
    with pytest.raises(LookupFailure, match="0.6"):
        mg.policy_lookup(Awareness.PROC_AWARE_TEMP_AWARE, 0.6)


def test_policy_override_file(tmp_path):
    path = tmp_path / "policy.csv"
    path.write_text("awareness,vdd,f_err,margin_mv,overhead_pct\nProcAwareTempAware,0.7,2.5,75,12\n")
    policy = mg.load_policy(path)
    assert policy.lookup(Awareness.PROC_AWARE_TEMP_AWARE, 0.7).vbb_margin == 0.075
    path.write_text("awareness,vdd,f_err,margin_mv,overhead_pct\nProcAwareTempAware,0.7,2.5,150,12\n")
    with pytest.raises(ConfigurationError):
        mg.load_policy(path)   # TA margin above the TU margin
    with pytest.raises(ConfigurationError):
        mg.load_policy(tmp_path / "missing.csv")


def _grid_oracle(margins, overheads):
    # independent oracle: brute-force grid over s, then refine
    best = None
    for lo, hi, n in ((0.1, 3.0, 30001),):
        s = np.linspace(lo, hi, n)
        cost = sum(((np.expm1(m / s) - ov) / ov) ** 2 for m, ov in zip(margins, overheads))
        best = s[np.argmin(cost)]
    s = np.linspace(best - 1e-3, best + 1e-3, 20001)
    cost = sum(((np.expm1(m / s) - ov) / ov) ** 2 for m, ov in zip(margins, overheads))
    return s[np.argmin(cost)]


def test_leak_slope_fit_matches_grid_oracle():
    margins, overheads = mg.overhead_pairs(0.7)
    assert margins == [0.05, 0.1, 0.15] and overheads == [0.10, 0.14, 0.37]
    fitted = mg.fit_leak_v_slope(margins, overheads)
    assert fitted == pytest.approx(_grid_oracle(margins, overheads), abs=1e-6)
    # frozen result
    assert fitted == pytest.approx(0.61663, abs=5e-5)


def test_fitted_overheads():
    s = mg.fit_leak_v_slope(*mg.overhead_pairs(0.7))
    predicted = [math.expm1(m / s) for m in (0.05, 0.1, 0.15)]
    assert predicted == pytest.approx([0.0844, 0.1760, 0.2755], abs=5e-4)
