import pytest
from hypothesis import given, settings, strategies as st

from bodybias import calibration as cal
from bodybias.chip_twin import ChipEnvironment, OperatingPoint, ProcessCorner, default_twin, fmax_true, sensor_model
from bodybias.errors import ConfigurationError, SearchError
from bodybias.model_fit import Awareness, predict_fmax

TWIN = default_twin()
ANCHOR = ChipEnvironment.at(0.7, 25.0)
OP = OperatingPoint(0.7, 25.0)


def test_default_plan():
    plan = cal.CalibrationPlan.default(0.7)
    assert len(plan.vbb_points) == 30
    assert plan.vbb_points[0] == -0.8 and plan.vbb_points[-1] == 0.65
    assert plan.benchmark_iterations == 10000 and plan.start_frequency == 100.0 and plan.step == 1.0


def test_plan_validation():
    with pytest.raises(ConfigurationError):
        cal.CalibrationPlan((0.1, 0.0))
    with pytest.raises(ConfigurationError):
        cal.CalibrationPlan((0.0, 0.03))
    with pytest.raises(ConfigurationError):
        cal.CalibrationPlan((0.0, 0.05), step=0.5)


def test_benchmark_boundary_is_inclusive():
    f = fmax_true(TWIN, ANCHOR)
    assert f == 175.0
    assert cal.benchmark_passes(TWIN, ANCHOR, 175.0)
    assert not cal.benchmark_passes(TWIN, ANCHOR, 176.0)
    assert cal.benchmark_passes(TWIN, ANCHOR, f) and not cal.benchmark_passes(TWIN, ANCHOR, f + 1)


def test_benchmark_charges_clock():
    plan = cal.CalibrationPlan.default(0.7)
    clock = cal.CalibrationClock()
    cal.benchmark_passes(TWIN, ANCHOR, 100.0, plan, clock)
    assert clock.benchmark_calls == 1
    assert clock.benchmark_s == pytest.approx(10000 * plan.cycles_per_iteration / 100e6)


def test_searches_find_anchor_and_bisection_is_cheaper():
    linear = cal.CalibrationPlan.default(0.7)
    binary = cal.CalibrationPlan.default(0.7, fmax_search=cal.SearchMethod.BINARY_SEARCH)
    c_lin, c_bin = cal.CalibrationClock(), cal.CalibrationClock()
    assert cal.search_fmax(TWIN, ANCHOR, linear, c_lin) == 175.0
    assert cal.search_fmax(TWIN, ANCHOR, binary, c_bin) == 175.0
    assert c_bin.benchmark_calls < c_lin.benchmark_calls
    assert c_lin.benchmark_calls == 77   # 100..175 pass, 176 fails


def test_search_below_start_fails_with_environment():
    env = ChipEnvironment.at(0.7, 25.0, -0.9)   # 96.25 MHz
    with pytest.raises(SearchError, match="vbb=-0.9"):
        cal.search_fmax(TWIN, env, cal.CalibrationPlan.default(0.7))


@settings(max_examples=500, deadline=None)
@given(st.floats(-20, 80), st.floats(-0.75, 0.65), st.sampled_from(list(ProcessCorner)), st.sampled_from([1.0, 2.0, 5.0]))
def test_search_methods_agree(temp, vbb, corner, step):
    die = TWIN.with_corner(corner)
    env = ChipEnvironment.at(0.7, temp, vbb)
    lin = cal.CalibrationPlan.default(0.7, step=step)
    bis = cal.CalibrationPlan.default(0.7, step=step, fmax_search=cal.SearchMethod.BINARY_SEARCH)
    if fmax_true(die, env) < 100.0:
        return
    a = cal.search_fmax(die, env, lin)
    assert a == cal.search_fmax(die, env, bis)
    assert a <= fmax_true(die, env) < a + step


def test_calibration_time_and_ledger():
    result = cal.calibrate(TWIN, OP)
    assert 3.0 <= result.elapsed <= 12.0
    assert result.elapsed == pytest.approx(6.0, rel=0.01)
    clock = result.clock
    assert result.elapsed == clock.benchmark_s + clock.pmb_s + clock.transition_s
    assert clock.pmb_s == pytest.approx(30 * 0.004)
    model, corner, elapsed = result
    assert model.awareness is Awareness.PROC_AWARE_TEMP_UNAWARE and corner is ProcessCorner.TYPICAL


def test_noiseless_calibration_round_trip():
    # the searched fmax is floored to the 1 MHz grid, so the recovered line is good to about 1 MHz
    die = TWIN.noiseless()
    model, corner, _ = cal.calibrate(die, OP)
    c, f0 = sensor_model(die, OP)
    assert corner is ProcessCorner.TYPICAL
    for vbb in (-0.8, 0.0, 0.65):
        env = ChipEnvironment(OP, vbb)
        f_pmb = (fmax_true(die, env) - f0) / c
        assert abs(predict_fmax(model, f_pmb) - fmax_true(die, env)) < 1.0


def test_noiseless_tester_fit_is_exact():
    die = TWIN.noiseless()
    samples = cal.tester_samples(die, 0.7, [ProcessCorner.TYPICAL], [25.0], 30, seed=1)
    model = cal.fit_linear(samples)
    c, f0 = sensor_model(die, OP)
    assert model.c_corr == pytest.approx(c, abs=1e-9) and model.f0 == pytest.approx(f0, abs=1e-9)


def test_low_points_are_skipped():
    plan = cal.CalibrationPlan((-0.95, -0.9, 0.0, 0.1))
    result = cal.calibrate(TWIN, OP, plan)
    assert result.skipped == (-0.95, -0.9) and len(result.samples) == 2


def test_too_few_points():
    with pytest.raises(SearchError):
        cal.calibrate(TWIN, OP, cal.CalibrationPlan((-1.0, -0.95, -0.9)))


@pytest.mark.parametrize("corner", list(ProcessCorner))
def test_classification_each_corner(corner):
    for seed in range(5):
        assert cal.calibrate(TWIN.with_corner(corner), OP, seed=seed).corner is corner


def test_two_temperatures_agree_within_temperature_envelope():
    cold = cal.calibrate(TWIN, OperatingPoint(0.7, 25.0), seed=1).model
    hot = cal.calibrate(TWIN, OperatingPoint(0.7, 80.0), seed=2).model
    for f_pmb in (180.0, 250.0, 350.0):
        a, b = predict_fmax(cold, f_pmb), predict_fmax(hot, f_pmb)
        assert abs(a - b) / min(a, b) <= 0.04


def test_plan_file(tmp_path):
    path = tmp_path / "plan.cfg"
    path.write_text("vbb_points = -0.5, 0.0, 0.5\nfmax_search = BinarySearch\n")
    plan = cal.load_plan(path)
    assert plan.vbb_points == (-0.5, 0.0, 0.5) and plan.fmax_search is cal.SearchMethod.BINARY_SEARCH
    path.write_text("speed = 2\n")
    with pytest.raises(ConfigurationError):
        cal.load_plan(path)


def test_characterized_range():
    assert cal.characterized_vbb_range(TWIN, 0.7) == (-1.0, 0.65)
    assert cal.characterized_vbb_range(TWIN, 0.5) == pytest.approx((-0.45, 0.55))
