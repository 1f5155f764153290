"""The four regulatory timescales as pure state-transition functions.

* ultra-fast: emergency detection on the activation vector plus selective
  suppression of overactive units
* fast: calcium proxy error and sigmoid-gated pump
* medium: activity accumulation and multiplicative synaptic scaling
* slow: performance/weight triggered structural shrinkage

Nothing in here mutates its arguments. Callers thread the returned state.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import MSTHError, as_mat, as_vec, frobenius_norm, pop_std, sigmoid, stats


class Scale(enum.IntEnum):
    # int values fix the serialization order of same-step records
    ULTRA = 0
    FAST = 1
    MEDIUM = 2
    SLOW = 3

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class StepSchedule:
    ultra_every: int = 1
    fast_every: int = 10
    medium_every: int = 100
    slow_every: int = 500

    def __post_init__(self):
        if not (1 <= self.ultra_every <= self.fast_every <= self.medium_every <= self.slow_every):
            raise MSTHError("invalid-config", "schedule must satisfy 1 <= ultra <= fast <= medium <= slow")

    def is_tick(self, scale: Scale, step: int) -> bool:
        every = (self.ultra_every, self.fast_every, self.medium_every, self.slow_every)[scale]
        return step % every == 0


@dataclass(frozen=True)
class RegulatorConfig:
    # emergency predicates
    mag_threshold: float = 4.0
    rate_value_threshold: float = 1.5
    rate_fraction_threshold: float = 0.25
    var_threshold: float = 3.0
    mean_threshold: float = 2.0
    min_predicates: int = 2
    # suppression
    suppress_mask_threshold: float = 2.0
    suppress_factor: float = 0.95
    refractory_steps: int = 2
    max_consecutive_ultra: int = 3
    # calcium
    calcium_target: float = 0.5
    calcium_threshold: float = 0.08
    pump_gain: float = 4.0
    pump_efficiency: float = 0.12
    calcium_leak: float = 0.9
    # synaptic scaling
    activity_target: float = 1.0
    downscale_trigger: float = 1.3
    upscale_trigger: float = 0.7
    downscale_factor: float = 0.996
    upscale_factor: float = 1.004
    # structural plasticity
    perf_threshold: float = 1.05
    perf_window: int = 3
    fro_threshold: float = 12.0
    outlier_threshold: float = 1.2
    wstd_threshold: float = 0.3
    structural_factor: float = 0.999
    schedule: StepSchedule = field(default_factory=StepSchedule)

    def __post_init__(self):
        if not 0 < self.suppress_factor <= 1:
            raise MSTHError("invalid-config", "suppress_factor must be in (0, 1]")
        if not 0 < self.structural_factor <= 1:
            raise MSTHError("invalid-config", "structural_factor must be in (0, 1]")
        if not 0 < self.calcium_threshold < 1:
            raise MSTHError("invalid-config", "calcium_threshold must be in (0, 1)")
        if not 0 < self.calcium_leak < 1:
            raise MSTHError("invalid-config", "calcium_leak must be in (0, 1)")
        if not self.downscale_factor < 1 < self.upscale_factor:
            raise MSTHError("invalid-config", "need downscale_factor < 1 < upscale_factor")
        if self.refractory_steps < 0 or self.max_consecutive_ultra < 1:
            raise MSTHError("invalid-config", "refractory/consecutive limits out of range")
        positive = (
            "mag_threshold", "rate_value_threshold", "rate_fraction_threshold", "var_threshold",
            "mean_threshold", "suppress_mask_threshold", "calcium_target", "pump_gain",
            "pump_efficiency", "activity_target", "downscale_trigger", "upscale_trigger",
            "perf_threshold", "fro_threshold", "outlier_threshold", "wstd_threshold",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise MSTHError("invalid-config", f"{name} must be > 0")


@dataclass(frozen=True)
class NeuronState:
    activations: np.ndarray
    calcium: np.ndarray
    activity_accum: float = 0.0
    accum_steps: int = 0
    perf_accumulator: tuple = ()

    @classmethod
    def initial(cls, n: int, calcium: float = 0.5) -> "NeuronState":
        return cls(activations=np.zeros(n), calcium=np.full(n, calcium))


@dataclass(frozen=True)
class InterventionOutcome:
    scale: Scale
    fired: bool
    detail: dict = field(default_factory=dict)
    layer: int | None = None

    def __post_init__(self):
        if self.detail and not self.fired:
            raise MSTHError("invalid-outcome", "detail is only attached to fired outcomes")


def not_fired(scale: Scale, layer: int | None = None) -> InterventionOutcome:
    return InterventionOutcome(scale, False, {}, layer)


# -- ultra-fast -------------------------------------------------------------

def emergency_predicates(a, cfg: RegulatorConfig) -> dict[str, bool]:
    """The four emergency conditions, each a strict inequality."""
    arr = as_vec(a)
    s = stats(arr)
    rate = float(np.count_nonzero(np.abs(arr) > cfg.rate_value_threshold)) / arr.size
    return {
        "mag": s.max_abs > cfg.mag_threshold,
        "rate": rate > cfg.rate_fraction_threshold,
        "var": s.var > cfg.var_threshold,
        "mean": s.mean_abs > cfg.mean_threshold,
    }


def emergency_consensus(a, cfg: RegulatorConfig) -> bool:
    return sum(emergency_predicates(a, cfg).values()) >= cfg.min_predicates


def detect_emergency(a, steps_since_last_ultra: int, consecutive_ultra: int, cfg: RegulatorConfig) -> bool:
    return (
        emergency_consensus(a, cfg)
        and steps_since_last_ultra > cfg.refractory_steps
        and consecutive_ultra < cfg.max_consecutive_ultra
    )


def suppression_multiplier(a, cfg: RegulatorConfig) -> np.ndarray:
    """Elementwise factor: ``suppress_factor`` where |a| exceeds the mask threshold, 1 elsewhere."""
    arr = np.asarray(a, dtype=np.float64)
    return np.where(np.abs(arr) > cfg.suppress_mask_threshold, cfg.suppress_factor, 1.0)


def suppress(a, cfg: RegulatorConfig) -> np.ndarray:
    arr = as_vec(a)
    return arr * suppression_multiplier(arr, cfg)


# -- fast -------------------------------------------------------------------

def calcium_error(c, cfg: RegulatorConfig) -> float:
    arr = as_vec(c)
    return float(np.sum(np.abs(arr - cfg.calcium_target))) / arr.size


def regulate_calcium(c, cfg: RegulatorConfig) -> tuple[np.ndarray, InterventionOutcome]:
    arr = as_vec(c)
    err = calcium_error(arr, cfg)
    if not err > cfg.calcium_threshold:
        return arr.copy(), not_fired(Scale.FAST)
    delta = arr - cfg.calcium_target
    out = arr - cfg.pump_efficiency * sigmoid(cfg.pump_gain * delta) * delta
    out = np.clip(out, 0.0, 1.0)
    return out, InterventionOutcome(Scale.FAST, True, {"error": err, "error_after": calcium_error(out, cfg)})


def update_calcium_from_activity(c, a, cfg: RegulatorConfig) -> np.ndarray:
    """Leaky integration of squashed activity into the calcium proxy.

    ``x / (1 + x)`` maps |a| into [0, 1) and sends resting activity |a| = 1
    to 0.5, so the integrator's fixed point under resting activity is the
    calcium set-point.
    """
    c = as_vec(c)
    a = as_vec(a)
    if c.shape != a.shape:
        raise MSTHError("shape-mismatch", f"calcium {c.shape} vs activity {a.shape}")
    mag = np.abs(a)
    drive = mag / (1.0 + mag)
    out = cfg.calcium_leak * c + (1.0 - cfg.calcium_leak) * drive
    return np.clip(out, 0.0, 1.0)


# -- medium -----------------------------------------------------------------

def accumulate_activity(state: NeuronState, a) -> NeuronState:
    arr = as_vec(a)
    level = float(np.sum(np.abs(arr))) / arr.size
    return replace(
        state,
        activations=arr.copy(),
        activity_accum=state.activity_accum + level,
        accum_steps=state.accum_steps + 1,
    )


def medium_scale(w, state: NeuronState, cfg: RegulatorConfig) -> tuple[np.ndarray, NeuronState, InterventionOutcome]:
    """Synaptic scaling on the accumulated activity rate.

    Returns the new weights, the state with its accumulator reset, and the outcome.
    """
    w = as_mat(w)
    if state.accum_steps == 0:
        raise MSTHError("no-accumulated-activity")
    rate = state.activity_accum / state.accum_steps
    reset = replace(state, activity_accum=0.0, accum_steps=0)

    factor, reason = None, None
    if rate > cfg.downscale_trigger * cfg.activity_target:
        factor, reason = cfg.downscale_factor, "activity-high"
    elif rate < cfg.upscale_trigger * cfg.activity_target:
        factor, reason = cfg.upscale_factor, "activity-low"
    elif pop_std(w) > cfg.wstd_threshold or float(np.max(np.abs(w))) > cfg.outlier_threshold:
        factor, reason = cfg.downscale_factor, "weight-stability"

    if factor is None:
        return w.copy(), reset, not_fired(Scale.MEDIUM)
    detail = {"rate": rate, "factor": factor, "reason": reason}
    return w * factor, reset, InterventionOutcome(Scale.MEDIUM, True, detail)


# -- slow -------------------------------------------------------------------

def performance_window(state: NeuronState, window: int = 3) -> float | None:
    hist = state.perf_accumulator
    if len(hist) < window:
        return None
    return sum(hist[-window:]) / window


def structural_triggers(w, state: NeuronState, cfg: RegulatorConfig) -> dict[str, bool]:
    w = as_mat(w)
    perf = performance_window(state, cfg.perf_window)
    return {
        "performance": perf is not None and perf < cfg.perf_threshold,
        "frobenius": frobenius_norm(w) > cfg.fro_threshold,
        "outlier": float(np.max(np.abs(w))) > cfg.outlier_threshold,
        "instability": pop_std(w) > cfg.wstd_threshold,
    }


def structural_step(w, state: NeuronState, cfg: RegulatorConfig) -> tuple[np.ndarray, InterventionOutcome]:
    w = as_mat(w)
    triggers = structural_triggers(w, state, cfg)
    if not any(triggers.values()):
        return w.copy(), not_fired(Scale.SLOW)
    detail = {"factor": cfg.structural_factor, "triggers": tuple(k for k, v in triggers.items() if v)}
    return w * cfg.structural_factor, InterventionOutcome(Scale.SLOW, True, detail)
