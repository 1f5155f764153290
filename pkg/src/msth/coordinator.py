"""Cross-scale coordination, the intervention ledger and regulator FLOP accounting.

The coordinator is permissive by default. Once the ultra-fast scale has been
active for ``override_after`` consecutive steps, and is active again, every
other scale is held back for that step.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .regulators import InterventionOutcome, Scale


@dataclass(frozen=True)
class CoordinatorState:
    consecutive_ultra: int = 0
    steps_since_last_ultra: int = 0
    override_active: bool = False
    step_counter: int = 0
    # consecutive steps on which suppression was actually applied; gates detect_emergency
    consecutive_fires: int = 0
    # steps since suppression was last applied; gates detect_emergency
    steps_since_last_fire: int = 10**9


def update_emergency_counter(state: CoordinatorState, ultra_fired: bool) -> CoordinatorState:
    if ultra_fired:
        return replace(state, consecutive_ultra=state.consecutive_ultra + 1, steps_since_last_ultra=0)
    return replace(
        state,
        consecutive_ultra=0,
        steps_since_last_ultra=state.steps_since_last_ultra + 1,
        override_active=False,
    )


def update_fire_clock(state: CoordinatorState, suppressed: bool) -> CoordinatorState:
    if suppressed:
        return replace(state, consecutive_fires=state.consecutive_fires + 1, steps_since_last_fire=0)
    return replace(state, consecutive_fires=0, steps_since_last_fire=state.steps_since_last_fire + 1)


@dataclass(frozen=True)
class ScaleRequestSet:
    """Which scales want to run this step. ``payloads`` carries optional would-be outcomes."""

    requested: frozenset = frozenset()
    payloads: dict = field(default_factory=dict)

    @classmethod
    def of(cls, *scales: Scale) -> "ScaleRequestSet":
        return cls(frozenset(scales))

    def __contains__(self, scale) -> bool:
        return scale in self.requested


def coordinate(
    requests: ScaleRequestSet, state: CoordinatorState, override_after: int = 3
) -> tuple[ScaleRequestSet, CoordinatorState]:
    if Scale.ULTRA in requests and state.consecutive_ultra >= override_after:
        only_ultra = ScaleRequestSet(
            frozenset({Scale.ULTRA}),
            {k: v for k, v in requests.payloads.items() if k == Scale.ULTRA},
        )
        return only_ultra, replace(state, override_active=True)
    return requests, replace(state, override_active=False)


class FlopKind(enum.Enum):
    DETECTION = "detection"
    SUPPRESSION = "suppression"
    CALCIUM_CHECK = "calcium_check"
    CALCIUM_PUMP = "calcium_pump"
    MEDIUM_SCALE = "medium_scale"
    STRUCTURAL = "structural"


# Fixed per-element cost table. n is the activation/calcium length for the
# activation-side ops and r*c for the weight-side ops.
FLOP_COST = {
    FlopKind.DETECTION: 8,
    FlopKind.SUPPRESSION: 3,
    FlopKind.CALCIUM_CHECK: 2,
    FlopKind.CALCIUM_PUMP: 9,
    FlopKind.MEDIUM_SCALE: 2,
    FlopKind.STRUCTURAL: 4,
}


@dataclass(frozen=True)
class TimelineRecord:
    step: int
    scale: Scale
    layer: int | None
    detail: dict


@dataclass
class InterventionLedger:
    counts: list = field(default_factory=lambda: [0, 0, 0, 0])
    timeline: list = field(default_factory=list)
    coordination_events: int = 0
    regulator_flops: int = 0
    steps_recorded: int = 0

    def record(self, step: int, outcomes) -> "InterventionLedger":
        fired = sorted(
            (o for o in outcomes if o.fired),
            key=lambda o: (int(o.scale), -1 if o.layer is None else o.layer),
        )
        for o in fired:
            self.counts[int(o.scale)] += 1
            self.timeline.append(TimelineRecord(step, o.scale, o.layer, dict(o.detail)))
        if len({o.scale for o in fired}) >= 2:
            self.coordination_events += 1
        self.steps_recorded += 1
        return self

    def charge(self, kind: FlopKind, n_elements: int) -> "InterventionLedger":
        if n_elements < 0:
            raise ValueError("n_elements must be >= 0")
        self.regulator_flops += FLOP_COST[kind] * n_elements
        return self

    @property
    def total(self) -> int:
        return sum(self.counts)

    def ratios(self) -> list[float]:
        total = self.total
        if total == 0:
            return [0.0, 0.0, 0.0, 0.0]
        return [c / total for c in self.counts]

    def summary(self) -> dict:
        return {
            "counts": {s.label: self.counts[int(s)] for s in Scale},
            "ratios": {s.label: r for s, r in zip(Scale, self.ratios())},
            "coordination_events": self.coordination_events,
            "regulator_flops": self.regulator_flops,
        }


def record(ledger: InterventionLedger, step: int, outcomes: list[InterventionOutcome]) -> InterventionLedger:
    return ledger.record(step, outcomes)


def charge_flops(ledger: InterventionLedger, op_kind: FlopKind, n_elements: int) -> InterventionLedger:
    return ledger.charge(op_kind, n_elements)
