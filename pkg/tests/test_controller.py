from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from bodybias.bb_gen import BbGenState, request_vbb
from bodybias.chip_twin import ChipEnvironment, OperatingPoint, default_twin, fmax_true, vbb_range
from bodybias.controller import (DEFAULT_GAINS, PidGains, PidState, RegulationConfig, controller_from_kv,
                                 controller_to_kv, freq_gap_to_dvbb, load_controller, on_new_setpoint,
                                 pid_step, published_model, regulate_once)
from bodybias.errors import ConfigurationError, DomainError
from bodybias.margining import BbSlope, margin_from_error
from bodybias.model_fit import Awareness, LinearPmbModel

TWIN = default_twin()
SLOPE = BbSlope.default(0.7)
TA_MODEL = published_model(Awareness.PROC_AWARE_TEMP_AWARE, 0.7)
BOUNDS = vbb_range(TWIN, 0.7)


def _config(f_target, margin=0.0, **kw):
    return RegulationConfig(f_target, TA_MODEL, SLOPE, margin, vbb_bounds=BOUNDS, **kw)


def _regulate(config, twin=TWIN, temp=25.0, seed=0, start=0.0):
    bbgen, _ = request_vbb(BbGenState.initial(0.7), start)
    env = ChipEnvironment.at(0.7, temp, bbgen.applied_vbb)
    return regulate_once(config, PidState(), bbgen, twin, env, seed, 0.0)


def test_pid_trivial_cases():
    state, out = pid_step(PidGains(0.0, 0.0, 0.0), PidState(), 10.0)
    assert out == 0.0 and state.previous_error == 10.0
    assert pid_step(PidGains(1.0, 0.0, 0.0), PidState(), 10.0)[1] == 10.0


def test_pid_terms_and_anti_windup():
    gains = PidGains(0.0, 1.0, 0.0, integral_clamp=15.0)
    state = PidState()
    for _ in range(5):
        state, out = pid_step(gains, state, 10.0)
    assert state.integral == 15.0 and out == 15.0
    _, out = pid_step(PidGains(0.0, 0.0, 2.0), PidState(0.0, 4.0), 10.0)
    assert out == 12.0
    with pytest.raises(DomainError):
        pid_step(gains, state, float("inf"))
    with pytest.raises(DomainError):
        PidGains(-1.0)


def test_gap_to_bias():
    assert freq_gap_to_dvbb(0.0, 175.0, SLOPE) == 0.0
    assert freq_gap_to_dvbb(8.75, 175.0, SLOPE) == pytest.approx(0.1, rel=1e-12)
    assert freq_gap_to_dvbb(-17.5, 175.0, SLOPE) == pytest.approx(-0.2, rel=1e-12)
    with pytest.raises(DomainError):
        freq_gap_to_dvbb(1.0, 0.0, SLOPE)


def test_config_validation():
    assert _config(175.0).max_iterations == 16 and _config(175.0).regulation_period == 2.0
    # one 50 mV step at 5 %/100 mV is worth 2.5 % of the target
    assert _config(200.0).band == pytest.approx(5.0)
    with pytest.raises(ConfigurationError):
        _config(0.0)
    with pytest.raises(ConfigurationError):
        RegulationConfig(175.0, TA_MODEL, BbSlope.default(0.5))


def test_exact_target_converges_immediately():
    out = _regulate(_config(175.0), TWIN.noiseless())
    assert out.converged and out.iterations == 1 and out.applied_vbb == 0.0
    assert out.elapsed == pytest.approx(0.004)


def test_low_target_goes_reverse():
    out = _regulate(_config(100.0, 0.05, gains=DEFAULT_GAINS), seed=3)
    assert out.converged and out.applied_vbb < -0.5


def test_high_target_goes_forward():
    out = _regulate(_config(200.0, 0.05), TWIN.noiseless())
    # (200/175 - 1) / 0.5 = 0.2857 V, plus 50 mV margin, rounded up to the grid
    assert out.converged and out.applied_vbb == 0.35


def test_vdd_mismatch_is_configuration_error():
    config = _config(175.0)
    env = ChipEnvironment.at(0.9, 25.0)
    with pytest.raises(ConfigurationError):
        regulate_once(config, PidState(), BbGenState.initial(0.9), TWIN, env, 0)


def test_unreachable_target_reports_non_convergence():
    out = _regulate(_config(400.0, 0.05))
    assert not out.converged and out.iterations == 16
    assert out.applied_vbb == BOUNDS[1]


def test_reset_to_zero():
    config = _config(175.0)
    moved, _ = request_vbb(BbGenState.initial(0.7), -0.6)
    reset = on_new_setpoint(config, moved)
    assert reset.applied_vbb == 0.0 and reset.transitions == 2
    assert on_new_setpoint(config, reset) is reset


@settings(max_examples=300, deadline=None)
@given(st.floats(100, 220), st.integers(0, 2 ** 32), st.floats(-0.5, 0.5))
def test_iteration_and_time_bounds(target, seed, start):
    out = _regulate(_config(target, 0.05), seed=seed, start=start)
    assert 1 <= out.iterations <= 16
    assert out.elapsed <= 16 * 0.004 + out.bbgen.transitions * 23e-6 + 1e-12


@settings(max_examples=300, deadline=None)
@given(st.floats(100, 220), st.integers(0, 2 ** 32), st.floats(0, 0.2), st.floats(0, 0.2))
def test_margin_monotonicity(target, seed, m1, m2):
    lo, hi = sorted((m1, m2))
    a = _regulate(_config(target, lo), seed=seed)
    b = _regulate(_config(target, hi), seed=seed)
    assert b.applied_vbb >= a.applied_vbb


@settings(max_examples=300, deadline=None)
@given(st.floats(-20, 80), st.floats(0.6, 1.2), st.integers(0, 2 ** 32))
def test_no_undershoot_with_temperature_unaware_policy(temp, ratio, seed):
    config, _ = controller_from_kv({"awareness": "ProcAwareTempUnaware"})
    op = OperatingPoint(0.7, temp)
    target = ratio * fmax_true(TWIN, ChipEnvironment(op))
    config = replace(config.with_target(target), vbb_bounds=BOUNDS)
    if target > 0.97 * fmax_true(TWIN, ChipEnvironment(op, BOUNDS[1])):
        return  # beyond the margin's reach at full forward bias
    out = regulate_once(config, PidState(), BbGenState.initial(0.7), TWIN, ChipEnvironment(op), seed, 0.0)
    if out.converged:
        assert fmax_true(TWIN, ChipEnvironment(op, out.applied_vbb)) >= target


@settings(max_examples=300, deadline=None)
@given(st.floats(0.6, 1.15), st.integers(0, 2 ** 32))
def test_no_undershoot_with_derived_margin(ratio, seed):
    # fixed temperature: sensor error plus the residual a converged step may leave
    residual = (1 - DEFAULT_GAINS.kp) * SLOPE.gain * 0.5
    margin = margin_from_error(TWIN.param("pmb_err_bound", 0.7) + residual, SLOPE)
    target = ratio * 175.0
    out = _regulate(_config(target, margin), seed=seed)
    if out.converged:
        assert fmax_true(TWIN, ChipEnvironment.at(0.7, 25.0, out.applied_vbb)) >= target


def test_controller_file(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("awareness = ProcUnawareTempUnaware\nf_target_mhz = 150\nkp = 0.5\n")
    config, awareness = load_controller(path)
    assert awareness is Awareness.PROC_UNAWARE_TEMP_UNAWARE
    assert config.margin == 0.15 and config.gains.kp == 0.5
    assert (config.model.c_corr, config.model.f0) == (0.614, 6.86)
    again, _ = controller_from_kv(controller_to_kv(config, awareness))
    assert again == config
    path.write_text("speed = 3\n")
    with pytest.raises(ConfigurationError):
        load_controller(path)


def test_published_model_fallback():
    model = published_model(Awareness.PROC_UNAWARE_TEMP_UNAWARE, 0.9)
    assert (model.c_corr, model.f0) == (0.6, 8.72)
    assert isinstance(model, LinearPmbModel)
