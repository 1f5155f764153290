"""Health monitoring, adaptive learning rate, bounded enhancement telemetry and realism score."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import MSTHError, as_vec, clamp01, pop_std

EXPECTED_RATIOS = (0.10, 0.35, 0.40, 0.15)
RATIO_WEIGHTS = (3.0, 0.3, 0.4, 0.4)
COORD_BONUS = 0.1
SCORE_BOUNDS = (0.1, 0.99)
ULTRA_RATIO_LIMIT = 0.20
ULTRA_PENALTY = 1.0

NOISE_CAP = 0.02
EFFICIENCY_CAP = 0.015
RECOVERY_CAP = 0.015
TOTAL_CAP = 0.05


@dataclass(frozen=True)
class HealthReport:
    h_activity: float
    h_calcium: float
    h_weights: float
    h_system: float
    adaptive_lr: float | None = None
    h_stability: float | None = None


def assess_health(activity_level: float, c, w) -> HealthReport:
    c = as_vec(c)
    h_act = clamp01(1.0 - abs(activity_level - 1.0))
    h_ca = clamp01(1.0 - pop_std(c))
    h_w = 1.0 / (1.0 + pop_std(w))
    return HealthReport(h_act, h_ca, h_w, (h_act + h_ca + h_w) / 3.0)


def combine_health(reports: list[HealthReport]) -> HealthReport:
    """Layer-wise mean of several reports."""
    if not reports:
        raise MSTHError("empty-input", "no layer health to combine")
    n = len(reports)
    return HealthReport(
        sum(r.h_activity for r in reports) / n,
        sum(r.h_calcium for r in reports) / n,
        sum(r.h_weights for r in reports) / n,
        sum(r.h_system for r in reports) / n,
    )


def adaptive_lr(h_current: float, h_stability: float, base_lr: float = 0.001) -> float:
    for h in (h_current, h_stability):
        if not (0.0 <= h <= 1.0):
            raise MSTHError("invalid-health", f"health value {h} outside [0, 1]")
    return base_lr * h_current * h_stability


def stability_factor(history, decay: float = 0.95) -> float:
    """EMA of past system health; 1.0 before any history exists."""
    ema = None
    for h in history:
        ema = h if ema is None else decay * ema + (1.0 - decay) * h
    return 1.0 if ema is None else clamp01(ema)


class StabilityTracker:
    """Incremental form of :func:`stability_factor`."""

    def __init__(self, decay: float = 0.95):
        self.decay = decay
        self.value: float | None = None

    def update(self, h: float) -> float:
        self.value = h if self.value is None else self.decay * self.value + (1.0 - self.decay) * h
        return self.current

    @property
    def current(self) -> float:
        return 1.0 if self.value is None else clamp01(self.value)


@dataclass(frozen=True)
class EnhancementEstimate:
    noise_reduction: float
    regulatory_efficiency: float
    recovery_speed: float
    total: float


def enhancement_estimate(ledger, steps: int) -> EnhancementEstimate:
    """Capped coordination-benefit estimate. Reported next to measured metrics, never folded into them."""
    if steps < 1:
        raise MSTHError("empty-run")
    c_fast = ledger.counts[1]
    c_medium = ledger.counts[2]
    noise = min(NOISE_CAP, NOISE_CAP * c_fast / steps)
    eff = min(EFFICIENCY_CAP, EFFICIENCY_CAP * ledger.coordination_events / steps)
    rec = min(RECOVERY_CAP, RECOVERY_CAP * c_medium / steps)
    return EnhancementEstimate(noise, eff, rec, min(TOTAL_CAP, noise + eff + rec))


@dataclass(frozen=True)
class RealismReport:
    actual_ratios: tuple
    expected_ratios: tuple
    weights: tuple
    coord_bonus: float
    raw: float
    score: float


def realism_score(counts, coordination_events: int, minimum_interventions: int = 10) -> RealismReport:
    counts = [int(c) for c in counts]
    if len(counts) != 4 or any(c < 0 for c in counts):
        raise MSTHError("invalid-counts", "need four non-negative counts")
    total = sum(counts)
    bonus = COORD_BONUS if coordination_events > 0 else 0.0
    lo, hi = SCORE_BOUNDS
    if total < minimum_interventions:
        ratios = tuple(c / total for c in counts) if total else (0.0, 0.0, 0.0, 0.0)
        return RealismReport(ratios, EXPECTED_RATIOS, RATIO_WEIGHTS, bonus, lo, lo)
    ratios = tuple(c / total for c in counts)
    deviation = sum(w * abs(r - e) for w, r, e in zip(RATIO_WEIGHTS, ratios, EXPECTED_RATIOS))
    raw = 1.0 - deviation + bonus
    if ratios[0] > ULTRA_RATIO_LIMIT:
        raw -= ULTRA_PENALTY
    return RealismReport(ratios, EXPECTED_RATIOS, RATIO_WEIGHTS, bonus, raw, float(np.clip(raw, lo, hi)))
