import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from msth.numerics import MSTHError, frobenius_norm, sigmoid
from msth.regulators import (
    InterventionOutcome, NeuronState, RegulatorConfig, Scale, StepSchedule, accumulate_activity,
    calcium_error, detect_emergency, emergency_predicates, medium_scale, performance_window,
    regulate_calcium, structural_step, structural_triggers, suppress, update_calcium_from_activity,
)

CFG = RegulatorConfig()
acts = arrays(np.float64, st.integers(1, 20), elements=st.floats(-20, 20, allow_nan=False))
unit = st.floats(0.0, 1.0, allow_nan=False)


def state_with(accum=0.0, steps=0, perf=(), n=2):
    return NeuronState(np.zeros(n), np.full(n, 0.5), accum, steps, tuple(perf))


class TestEmergency:
    def test_quiet_vector(self):
        assert not detect_emergency([0, 0, 0, 0], 100, 0, CFG)

    def test_outlier_fires_two_predicates(self):
        p = emergency_predicates([5.0, 0.1, 0.1, 0.1], CFG)
        assert p == {"mag": True, "rate": False, "var": True, "mean": False}
        assert detect_emergency([5.0, 0.1, 0.1, 0.1], 100, 0, CFG)

    def test_refractory_gate(self):
        assert not detect_emergency([5.0, 0.1, 0.1, 0.1], 0, 0, CFG)
        assert not detect_emergency([5.0, 0.1, 0.1, 0.1], CFG.refractory_steps, 0, CFG)
        assert detect_emergency([5.0, 0.1, 0.1, 0.1], CFG.refractory_steps + 1, 0, CFG)

    def test_consecutive_gate(self):
        a = [5.0, 0.1, 0.1, 0.1]
        assert detect_emergency(a, 100, 2, CFG)
        assert not detect_emergency(a, 100, 3, CFG)

    @pytest.mark.parametrize("a,key", [
        ([4.0, 0.0], "mag"),             # max |a| == 4 is not > 4
        ([1.6, 0, 0, 0], "rate"),        # exactly 25% above 1.5
        ([2.0, 2.0], "mean"),            # mean |a| == 2
    ])
    def test_predicates_are_strict(self, a, key):
        assert not emergency_predicates(a, CFG)[key]

    def test_variance_boundary_strict(self):
        # population variance of [-s, s] is s^2
        s = np.sqrt(3.0)
        assert not emergency_predicates([-s, s], RegulatorConfig(var_threshold=3.0 + 1e-12))["var"]

    def test_single_predicate_is_not_consensus(self):
        assert not detect_emergency([4.5, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0], 100, 0,
                                    RegulatorConfig(var_threshold=100.0))

    def test_empty_rejected(self):
        with pytest.raises(MSTHError) as e:
            detect_emergency([], 100, 0, CFG)
        assert e.value.code == "empty-input"


class TestSuppress:
    def test_mask_arithmetic(self):
        np.testing.assert_allclose(suppress([3.0, 1.0, -2.5], CFG), [2.85, 1.0, -2.375], atol=1e-12)

    def test_boundary_unchanged(self):
        np.testing.assert_array_equal(suppress([1.9, -2.0, 0.0], CFG), [1.9, -2.0, 0.0])

    def test_factor(self):
        np.testing.assert_allclose(suppress([100.0], CFG), [95.0], atol=1e-12)

    @given(acts)
    def test_never_amplifies_and_keeps_sign(self, a):
        out = suppress(a, CFG)
        assert np.all(np.abs(out) <= np.abs(a))
        assert np.all(np.sign(out) == np.sign(a))

    def test_does_not_mutate(self):
        a = np.array([3.0, 5.0])
        suppress(a, CFG)
        np.testing.assert_array_equal(a, [3.0, 5.0])


class TestCalcium:
    def test_error_values(self):
        assert calcium_error([0.5, 0.5], CFG) == 0
        assert calcium_error([0.9, 0.3], CFG) == pytest.approx(0.3, abs=1e-12)

    def test_threshold_is_strict(self):
        c, out = regulate_calcium([0.58], CFG)
        assert calcium_error([0.58], CFG) == pytest.approx(0.08, abs=1e-12)
        assert not out.fired
        np.testing.assert_array_equal(c, [0.58])

    def test_at_setpoint(self):
        c, out = regulate_calcium([0.5], CFG)
        assert not out.fired and c.tolist() == [0.5]

    def test_pump_high_side(self):
        c, out = regulate_calcium([0.9], CFG)
        assert out.fired
        assert c[0] == pytest.approx(0.86006, abs=1e-4)
        assert c[0] == pytest.approx(0.9 - 0.12 * sigmoid(1.6) * 0.4, abs=1e-12)

    def test_pump_low_side(self):
        c, out = regulate_calcium([0.1], CFG)
        assert out.fired
        assert c[0] == pytest.approx(0.10806, abs=1e-4)

    def test_empty_rejected(self):
        with pytest.raises(MSTHError) as e:
            calcium_error([], CFG)
        assert e.value.code == "empty-input"

    @given(arrays(np.float64, st.integers(1, 5), elements=unit))
    def test_output_stays_in_unit_interval(self, c):
        out, _ = regulate_calcium(c, CFG)
        assert np.all((out >= 0) & (out <= 1))

    @given(arrays(np.float64, st.integers(1, 5), elements=unit))
    def test_fired_step_reduces_error(self, c):
        out, res = regulate_calcium(c, CFG)
        if res.fired:
            assert calcium_error(out, CFG) < calcium_error(c, CFG)

    def test_activity_integration(self):
        np.testing.assert_allclose(update_calcium_from_activity([0.5], [0.0], CFG), [0.45])
        np.testing.assert_allclose(update_calcium_from_activity([0.0], [0.0], CFG), [0.0])
        np.testing.assert_allclose(update_calcium_from_activity([0.5], [1.0], CFG), [0.5])

    def test_activity_shape_mismatch(self):
        with pytest.raises(MSTHError) as e:
            update_calcium_from_activity([0.5, 0.5], [1.0], CFG)
        assert e.value.code == "shape-mismatch"


class TestSynapticScaling:
    def test_accumulate(self):
        s = accumulate_activity(state_with(), [0.0, 0.0])
        assert (s.activity_accum, s.accum_steps) == (0.0, 1)
        s = accumulate_activity(state_with(1.0, 1), [2.0, 0.0])
        assert (s.activity_accum, s.accum_steps) == (2.0, 2)
        s = state_with()
        for _ in range(3):
            s = accumulate_activity(s, [1.0, -1.0])
        assert s.activity_accum == 3.0

    def test_dead_zone(self):
        w = np.full((2, 2), 0.1)
        w2, st_, out = medium_scale(w, state_with(5.0, 5), CFG)
        assert not out.fired
        np.testing.assert_array_equal(w2, w)
        assert (st_.activity_accum, st_.accum_steps) == (0.0, 0)

    def test_downscale(self):
        w = np.full((2, 2), 0.1)
        w2, _, out = medium_scale(w, state_with(2.0, 1), CFG)
        assert out.fired
        np.testing.assert_allclose(w2, w * 0.996, rtol=1e-15)

    def test_upscale(self):
        w = np.full((2, 2), 0.1)
        w2, _, out = medium_scale(w, state_with(0.5, 1), CFG)
        assert out.fired
        np.testing.assert_allclose(w2, w * 1.004, rtol=1e-15)

    def test_stability_correction_in_dead_zone(self):
        w = np.array([[2.0, 0.0], [0.0, 0.0]])
        w2, _, out = medium_scale(w, state_with(1.0, 1), CFG)
        assert out.fired and out.detail["reason"] == "weight-stability"
        np.testing.assert_allclose(w2, w * 0.996)

    def test_requires_activity(self):
        with pytest.raises(MSTHError) as e:
            medium_scale(np.eye(2), state_with(), CFG)
        assert e.value.code == "no-accumulated-activity"

    @given(arrays(np.float64, (3, 3), elements=st.floats(0.1, 2.0)), st.floats(0.0, 3.0))
    def test_preserves_weight_ratios(self, w, rate):
        w2, _, _ = medium_scale(w, state_with(rate, 1), CFG)
        np.testing.assert_allclose(w2 / w2.flat[0], w / w.flat[0], rtol=1e-12)


class TestStructural:
    def test_performance_window(self):
        assert performance_window(state_with(perf=())) is None
        assert performance_window(state_with(perf=(1.0, 1.1, 1.2, 0.9, 1.0))) == pytest.approx(1.0333, abs=1e-4)

    def test_performance_trigger_strict(self):
        trig = structural_triggers(np.full((2, 2), 0.1), state_with(perf=(1.05, 1.05, 1.05)), CFG)
        assert not trig["performance"]

    def test_tame_weights_unchanged(self):
        w = np.full((2, 2), 0.1)
        w2, out = structural_step(w, state_with(perf=(2, 2, 2)), CFG)
        assert not out.fired
        np.testing.assert_array_equal(w2, w)

    def test_large_weights_shrink(self):
        w = np.array([[10.0, 0.0], [0.0, 10.0]])
        trig = structural_triggers(w, state_with(), CFG)
        assert trig["frobenius"] and trig["outlier"] and trig["instability"]
        w2, out = structural_step(w, state_with(), CFG)
        assert out.fired
        np.testing.assert_allclose(w2, w * 0.999, rtol=1e-15)

    @given(arrays(np.float64, (3, 3), elements=st.floats(-20, 20, allow_nan=False)))
    def test_fired_norm_factor(self, w):
        w2, out = structural_step(w, state_with(perf=(1.0, 1.0, 1.0), n=3), CFG)
        assert out.fired
        assert frobenius_norm(w2) == pytest.approx(0.999 * frobenius_norm(w), rel=1e-12, abs=1e-300)


class TestConfig:
    def test_schedule_ticks(self):
        sch = StepSchedule()
        assert [s for s in range(1, 1001) if sch.is_tick(Scale.SLOW, s)] == [500, 1000]
        assert sch.is_tick(Scale.FAST, 10) and not sch.is_tick(Scale.FAST, 11)

    def test_schedule_must_be_ordered(self):
        with pytest.raises(MSTHError):
            StepSchedule(fast_every=200, medium_every=100)

    @pytest.mark.parametrize("kw", [{"suppress_factor": 1.5}, {"calcium_threshold": 0.0},
                                    {"downscale_factor": 1.01}, {"mag_threshold": -1.0}])
    def test_invalid_config(self, kw):
        with pytest.raises(MSTHError) as e:
            RegulatorConfig(**kw)
        assert e.value.code == "invalid-config"

    def test_detail_only_when_fired(self):
        with pytest.raises(MSTHError):
            InterventionOutcome(Scale.FAST, False, {"x": 1})


@settings(max_examples=50)
@given(st.lists(unit, min_size=1, max_size=3))
def test_regulators_are_pure(c):
    a, b = regulate_calcium(c, CFG), regulate_calcium(c, CFG)
    assert a[0].tobytes() == b[0].tobytes() and a[1] == b[1]
