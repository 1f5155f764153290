import numpy as np
import pytest
from hypothesis import given, strategies as st

from msth.coordinator import InterventionLedger
from msth.health import (
    StabilityTracker, adaptive_lr, assess_health, combine_health, enhancement_estimate, realism_score,
    stability_factor,
)
from msth.numerics import MSTHError

unit = st.floats(0.0, 1.0, allow_nan=False)


class TestAssess:
    def test_perfect(self):
        r = assess_health(1.0, [0.5, 0.5], np.full((2, 2), 0.3))
        assert (r.h_activity, r.h_calcium, r.h_weights, r.h_system) == (1.0, 1.0, 1.0, 1.0)

    def test_weight_std_one(self):
        assert assess_health(1.0, [0.5], [[1.0, -1.0]]).h_weights == pytest.approx(0.5)

    def test_activity_clamped(self):
        assert assess_health(2.5, [0.5], [[0.0]]).h_activity == 0.0

    def test_empty_calcium(self):
        with pytest.raises(MSTHError) as e:
            assess_health(1.0, [], [[0.0]])
        assert e.value.code == "empty-input"

    @given(st.floats(-10, 10, allow_nan=False), st.lists(unit, min_size=1, max_size=8),
           st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=8))
    def test_components_in_unit_interval(self, level, c, w):
        r = assess_health(level, c, [w])
        for v in (r.h_activity, r.h_calcium, r.h_weights, r.h_system):
            assert 0.0 <= v <= 1.0
        assert r.h_system == pytest.approx((r.h_activity + r.h_calcium + r.h_weights) / 3)

    def test_combine(self):
        a = assess_health(1.0, [0.5], [[0.0]])
        b = assess_health(2.0, [0.5], [[0.0]])
        assert combine_health([a, b]).h_activity == 0.5
        with pytest.raises(MSTHError):
            combine_health([])


class TestAdaptiveLr:
    def test_values(self):
        assert adaptive_lr(1.0, 1.0) == pytest.approx(0.001)
        assert adaptive_lr(0.5, 0.5) == pytest.approx(0.00025)
        assert adaptive_lr(0.0, 0.7) == 0.0

    @pytest.mark.parametrize("h", [(-0.1, 0.5), (0.5, 1.1)])
    def test_out_of_range(self, h):
        with pytest.raises(MSTHError) as e:
            adaptive_lr(*h)
        assert e.value.code == "invalid-health"

    @given(unit, unit, st.floats(1e-6, 1.0))
    def test_bounded_by_base(self, h, s, base):
        assert 0.0 <= adaptive_lr(h, s, base) <= base


class TestStability:
    def test_empty(self):
        assert stability_factor([]) == 1.0

    def test_fixed_point(self):
        assert stability_factor([0.8] * 200) == pytest.approx(0.8, abs=1e-6)

    def test_one_step(self):
        assert stability_factor([1.0, 0.0]) == pytest.approx(0.95)

    @given(st.lists(unit, max_size=50))
    def test_tracker_matches_batch(self, hist):
        t = StabilityTracker()
        for h in hist:
            t.update(h)
        assert t.current == pytest.approx(stability_factor(hist))


class TestEnhancement:
    def test_empty_ledger(self):
        e = enhancement_estimate(InterventionLedger(), 10)
        assert (e.noise_reduction, e.regulatory_efficiency, e.recovery_speed, e.total) == (0, 0, 0, 0)

    def test_noise_cap(self):
        e = enhancement_estimate(InterventionLedger(counts=[0, 50, 0, 0]), 50)
        assert e.noise_reduction == pytest.approx(0.02)

    def test_total_cap(self):
        e = enhancement_estimate(InterventionLedger(counts=[0, 100, 100, 0], coordination_events=100), 100)
        assert (e.noise_reduction, e.regulatory_efficiency, e.recovery_speed) == pytest.approx((0.02, 0.015, 0.015))
        assert e.total == pytest.approx(0.05)

    def test_empty_run(self):
        with pytest.raises(MSTHError) as e:
            enhancement_estimate(InterventionLedger(), 0)
        assert e.value.code == "empty-run"

    @given(st.lists(st.integers(0, 10_000), min_size=4, max_size=4), st.integers(0, 10_000), st.integers(1, 10_000))
    def test_caps_always_hold(self, counts, coord, steps):
        e = enhancement_estimate(InterventionLedger(counts=counts, coordination_events=coord), steps)
        assert e.noise_reduction <= 0.02 and e.regulatory_efficiency <= 0.015 and e.recovery_speed <= 0.015
        assert e.total <= 0.05


class TestRealism:
    def test_perfect_ratios_clamp_high(self):
        r = realism_score([10, 35, 40, 15], 1)
        assert r.raw == pytest.approx(1.1) and r.score == 0.99

    def test_ultra_heavy_clamp_low(self):
        r = realism_score([50, 30, 15, 5], 0)
        assert r.raw == pytest.approx(-0.355 - 1.0)
        assert r.score == 0.1

    def test_too_few_interventions(self):
        assert realism_score([0, 0, 0, 0], 0).score == 0.1
        assert realism_score([1, 3, 4, 1], 5).score == 0.1

    @given(st.lists(st.integers(0, 1000), min_size=4, max_size=4), st.integers(0, 100))
    def test_bounds(self, counts, coord):
        assert 0.1 <= realism_score(counts, coord).score <= 0.99

    def test_invalid_counts(self):
        with pytest.raises(MSTHError):
            realism_score([1, 2, 3], 0)
