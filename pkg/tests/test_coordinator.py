import pytest
from hypothesis import given, strategies as st

from msth.coordinator import (
    FLOP_COST, CoordinatorState, FlopKind, InterventionLedger, ScaleRequestSet, charge_flops, coordinate, record,
    update_emergency_counter, update_fire_clock,
)
from msth.regulators import InterventionOutcome, Scale


def fired(scale, layer=None):
    return InterventionOutcome(scale, True, {}, layer)


class TestCounter:
    def test_increment(self):
        assert update_emergency_counter(CoordinatorState(), True).consecutive_ultra == 1

    def test_reset(self):
        s = update_emergency_counter(CoordinatorState(consecutive_ultra=5, override_active=True), False)
        assert s.consecutive_ultra == 0 and not s.override_active

    def test_three_in_a_row(self):
        s = CoordinatorState()
        for _ in range(3):
            s = update_emergency_counter(s, True)
        assert s.consecutive_ultra == 3

    @given(st.lists(st.booleans(), max_size=60))
    def test_counter_equals_trailing_run(self, trace):
        s = CoordinatorState()
        for f in trace:
            s = update_emergency_counter(s, f)
        run = 0
        for f in reversed(trace):
            if not f:
                break
            run += 1
        assert s.consecutive_ultra == run

    def test_fire_clock(self):
        s = update_fire_clock(CoordinatorState(), True)
        assert (s.consecutive_fires, s.steps_since_last_fire) == (1, 0)
        s = update_fire_clock(s, False)
        assert (s.consecutive_fires, s.steps_since_last_fire) == (0, 1)


class TestCoordinate:
    def test_override(self):
        granted, s = coordinate(ScaleRequestSet.of(Scale.ULTRA, Scale.FAST, Scale.MEDIUM),
                                CoordinatorState(consecutive_ultra=3))
        assert granted.requested == {Scale.ULTRA} and s.override_active

    def test_no_ultra_request_no_override(self):
        granted, s = coordinate(ScaleRequestSet.of(Scale.FAST, Scale.MEDIUM), CoordinatorState(consecutive_ultra=7))
        assert granted.requested == {Scale.FAST, Scale.MEDIUM} and not s.override_active

    def test_below_threshold_permissive(self):
        granted, _ = coordinate(ScaleRequestSet.of(Scale.ULTRA, Scale.SLOW), CoordinatorState(consecutive_ultra=2))
        assert granted.requested == {Scale.ULTRA, Scale.SLOW}

    @given(st.sets(st.sampled_from(list(Scale))), st.integers(0, 10))
    def test_granted_is_subset(self, req, n):
        granted, s = coordinate(ScaleRequestSet(frozenset(req)), CoordinatorState(consecutive_ultra=n))
        assert granted.requested <= req
        assert s.override_active == (Scale.ULTRA in req and n >= 3)
        if s.override_active:
            assert granted.requested == {Scale.ULTRA}
        else:
            assert granted.requested == req


class TestLedger:
    def test_nothing_fired(self):
        led = record(InterventionLedger(), 1, [InterventionOutcome(Scale.FAST, False)])
        assert led.counts == [0, 0, 0, 0] and led.coordination_events == 0 and led.steps_recorded == 1

    def test_coordination_event(self):
        led = record(InterventionLedger(), 1, [fired(Scale.FAST), fired(Scale.MEDIUM)])
        assert led.counts == [0, 1, 1, 0] and led.coordination_events == 1

    def test_same_scale_two_layers_is_not_coordination(self):
        led = record(InterventionLedger(), 1, [fired(Scale.FAST, 0), fired(Scale.FAST, 1)])
        assert led.counts[1] == 2 and led.coordination_events == 0

    def test_accumulation(self):
        led = InterventionLedger()
        for t in range(100):
            record(led, t, [fired(Scale.FAST)])
        assert led.counts[1] == 100

    def test_timeline_order(self):
        led = record(InterventionLedger(), 7, [fired(Scale.SLOW, 0), fired(Scale.ULTRA, 1), fired(Scale.ULTRA, 0)])
        assert [(r.scale, r.layer) for r in led.timeline] == [(Scale.ULTRA, 0), (Scale.ULTRA, 1), (Scale.SLOW, 0)]

    def test_ratios(self):
        led = InterventionLedger(counts=[1, 1, 2, 0])
        assert led.ratios() == [0.25, 0.25, 0.5, 0.0]
        assert InterventionLedger().ratios() == [0.0] * 4


class TestFlops:
    def test_cost_table(self):
        assert [FLOP_COST[k] for k in FlopKind] == [8, 3, 2, 9, 2, 4]

    def test_suppression_cost(self):
        assert charge_flops(InterventionLedger(), FlopKind.SUPPRESSION, 4).regulator_flops == 12

    def test_zero_elements(self):
        assert charge_flops(InterventionLedger(), FlopKind.MEDIUM_SCALE, 0).regulator_flops == 0

    def test_always_on_monitor_cost(self):
        led = InterventionLedger()
        charge_flops(led, FlopKind.DETECTION, 4)
        charge_flops(led, FlopKind.CALCIUM_CHECK, 4)
        assert led.regulator_flops == 40

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            charge_flops(InterventionLedger(), FlopKind.DETECTION, -1)
