import math
from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from bodybias import chip_twin as ct
from bodybias.chip_twin import ChipEnvironment, OperatingPoint, ProcessCorner
from bodybias.errors import ConfigurationError, DomainError

TWIN = ct.default_twin()
NOISELESS = TWIN.noiseless()


def test_temperature_coefficient_from_anchors():
    # 175 MHz at 25 C and 170 MHz at 17 C on a line through 25 C
    expected = (1 - Fraction(170, 175)) / (25 - 17)
    assert expected == Fraction(1, 280)
    assert TWIN.param("temp_coeff", 0.7) == pytest.approx(float(expected), rel=1e-12)


def test_anchor_frequencies():
    assert ct.fmax_true(TWIN, ChipEnvironment.at(0.7, 25.0)) == pytest.approx(175.0, rel=1e-12)
    assert ct.fmax_true(TWIN, ChipEnvironment.at(0.7, 17.0)) == pytest.approx(170.0, rel=1e-12)
    # 175 * (1 + 55/280)
    assert ct.fmax_true(TWIN, ChipEnvironment.at(0.7, 80.0)) == pytest.approx(float(175 * (1 + Fraction(55, 280))),
                                                                              rel=1e-12)


def test_leakage_doubles_from_25_to_80():
    hot = ct.leakage(TWIN, ChipEnvironment.at(0.7, 80.0))
    cold = ct.leakage(TWIN, ChipEnvironment.at(0.7, 25.0))
    assert hot / cold == pytest.approx(2.0, rel=1e-12)


def test_body_bias_gain_matches_slope():
    f0 = ct.fmax_true(TWIN, ChipEnvironment.at(0.7, 25.0))
    f1 = ct.fmax_true(TWIN, ChipEnvironment.at(0.7, 25.0, 0.1))
    assert f1 / f0 - 1 == pytest.approx(0.05, rel=1e-12)


def test_corner_speeds():
    fast = ct.fmax_true(TWIN.with_corner(ProcessCorner.FAST), ChipEnvironment.at(0.7, 25.0))
    slow = ct.fmax_true(TWIN.with_corner(ProcessCorner.SLOW), ChipEnvironment.at(0.7, 25.0))
    assert fast == pytest.approx(175 * 1.06) and slow == pytest.approx(175 * 0.94)


def test_power_units():
    op = OperatingPoint(0.7, 25.0)
    # nF * V^2 * MHz = mW
    assert ct.dynamic_power(TWIN, op, 100.0) == pytest.approx(TWIN.c_eff * 0.49 * 100.0)
    # 2000 uA at 0.7 V = 1.4 mW
    assert ct.leakage_power(TWIN, ChipEnvironment(op)) == pytest.approx(1.4)
    with pytest.raises(DomainError):
        ct.dynamic_power(TWIN, op, -1.0)


def test_validity_floor():
    assert ct.vbb_floor(TWIN, 0.7) == -1.0
    assert ct.vbb_floor(TWIN, 0.9) == -1.0
    # 1 + 1.1 * v >= 0.05  ->  v >= -0.8636, rounded up to the grid
    assert ct.vbb_floor(TWIN, 0.5) == -0.85
    with pytest.raises(DomainError):
        ct.fmax_true(TWIN, ChipEnvironment.at(0.5, 25.0, -0.95))


def test_environment_domain():
    with pytest.raises(DomainError):
        OperatingPoint(0.6, 25.0)
    with pytest.raises(DomainError):
        OperatingPoint(0.7, 81.0)
    with pytest.raises(DomainError):
        ChipEnvironment.at(0.7, 25.0, 0.66)
    with pytest.raises(DomainError):
        ChipEnvironment.at(0.7, 25.0, -1.01)
    assert ct.vbb_max(0.7) == 0.65


def test_twin_validation():
    with pytest.raises(ConfigurationError):
        replace(TWIN, leak_v_slope=0.0)
    with pytest.raises(ConfigurationError):
        replace(TWIN, corner_speed={ProcessCorner.FAST: 0.9, ProcessCorner.TYPICAL: 1.0, ProcessCorner.SLOW: 0.94})
    with pytest.raises(ConfigurationError):
        ProcessCorner.parse("medium")


def test_noiseless_sensor_is_exact():
    for corner in ProcessCorner:
        die = NOISELESS.with_corner(corner)
        env = ChipEnvironment.at(0.7, 60.0, 0.2)
        c, f0 = ct.sensor_model(die, env.op)
        assert c * ct.pmb_read(die, env, 5) + f0 == pytest.approx(ct.fmax_true(die, env), rel=1e-12)


def test_sensor_inverse_model_at_reference_is_published():
    c, f0 = ct.sensor_model(TWIN, OperatingPoint(0.7, 25.0))
    assert (c, f0) == (0.59, 5.19)


def test_read_is_seed_deterministic():
    env = ChipEnvironment.at(0.7, 25.0)
    assert ct.pmb_read(TWIN, env, 11) == ct.pmb_read(TWIN, env, 11)
    assert ct.pmb_read(TWIN, env, 11) != ct.pmb_read(TWIN, env, 12)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32), st.floats(-20, 80), st.floats(-1.0, 0.65),
       st.sampled_from(list(ProcessCorner)))
def test_read_error_bounded_by_die_model(seed, temp, vbb, corner):
    die = TWIN.with_corner(corner)
    env = ChipEnvironment.at(0.7, temp, vbb)
    c, f0 = ct.sensor_model(die, env.op)
    f = ct.fmax_true(die, env)
    assert abs(c * ct.pmb_read(die, env, seed) + f0 - f) / f <= die.param("pmb_err_bound", 0.7) + 1e-12


@settings(max_examples=500, deadline=None)
@given(st.sampled_from([0.5, 0.7, 0.9]), st.floats(-20, 80), st.floats(-20, 80), st.floats(-0.85, 0.55),
       st.floats(0.001, 0.3))
def test_monotonicity(vdd, t1, t2, vbb, dv):
    lo, hi = sorted((t1, t2))
    a = ChipEnvironment.at(vdd, lo, vbb)
    b = ChipEnvironment.at(vdd, lo, min(vbb + dv, ct.vbb_max(vdd)))
    c = ChipEnvironment.at(vdd, hi, vbb)
    if b.vbb > a.vbb:
        assert ct.fmax_true(TWIN, b) > ct.fmax_true(TWIN, a)
        assert ct.leakage(TWIN, b) > ct.leakage(TWIN, a)
    assert ct.fmax_true(TWIN, c) >= ct.fmax_true(TWIN, a)
    assert ct.leakage(TWIN, c) >= ct.leakage(TWIN, a)


def test_c_eff_closed_form_round_trip():
    op = OperatingPoint(0.7, 80.0)
    c = ct.c_eff_for_improvement(TWIN, op, 170.0, -0.25, 0.15)
    die = replace(TWIN, c_eff=c)
    off = ct.total_power(die, ChipEnvironment(op, 0.0), 170.0)
    on = ct.total_power(die, ChipEnvironment(op, -0.25), 170.0)
    assert 1 - on / off == pytest.approx(0.15, rel=1e-12)
    with pytest.raises(DomainError):
        ct.c_eff_for_improvement(TWIN, op, 170.0, 0.1, 0.15)


def test_shipped_c_eff_matches_closed_form():
    # frozen value: 15 % gain at 80 C, 170 MHz, 0.7 V with the typical regulated bias of -0.25 V
    c = ct.c_eff_for_improvement(TWIN, OperatingPoint(0.7, 80.0), 170.0, -0.25, 0.15)
    assert TWIN.c_eff == pytest.approx(c, rel=0.01)


def test_kv_round_trip(tmp_path):
    path = tmp_path / "twin.cfg"
    path.write_text(ct.default_twin_text())
    assert ct.load_twin(path) == TWIN


def test_kv_override_and_errors(tmp_path):
    path = tmp_path / "twin.cfg"
    path.write_text("corner = Slow\nf_base_mhz[0.7] = 180\n")
    twin = ct.load_twin(path)
    assert twin.corner is ProcessCorner.SLOW and twin.param("f_base", 0.7) == 180.0
    assert twin.param("f_base", 0.9) == 300.0
    path.write_text("bogus = 1\n")
    with pytest.raises(ConfigurationError):
        ct.load_twin(path)
    path.write_text("f_base_mhz = 3\n")
    with pytest.raises(ConfigurationError):
        ct.load_twin(path)
    with pytest.raises(ConfigurationError, match="nope.cfg"):
        ct.load_twin(tmp_path / "nope.cfg")


def test_leak_slope_default_is_fitted_value():
    from bodybias.margining import fit_leak_v_slope, overhead_pairs
    assert TWIN.leak_v_slope == pytest.approx(fit_leak_v_slope(*overhead_pairs(0.7)), abs=5e-5)
    assert math.isclose(TWIN.leak_t_slope, 55 / math.log(2))
