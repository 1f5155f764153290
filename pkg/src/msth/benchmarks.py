"""Seed-replicated benchmark protocols shared by the acceptance suite and scripts/.

``failure_benchmark`` compares the unregulated baseline with full MSTH under
weight corruption, escalating the corruption magnitude along a fixed ladder
until the baseline shows failures. ``coordination_benchmark`` compares
regulator FLOPs with the coordinator on and off. ``nominal_realism`` reports
intervention ratios of an unperturbed run.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .config import ExperimentSpec, apply_overrides, load_config
from .harness import run

DEFAULT_LADDER = (10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0)


def perturbation_spec(magnitude: float = 10.0, **overrides) -> ExperimentSpec:
    """The spirals / weight-corruption workload (first hidden layer, 50 steps from step 200)."""
    kv = {
        "name": "perturbation",
        "dataset.kind": "spirals",
        "dataset.n": "600",
        "dataset.noise": "0.2",
        "network.hidden": "32, 32",
        "loss": "mse",
        "optimizer.kind": "sgd",
        "optimizer.lr": "0.05",
        "max_steps": "750",
        "scales": "full",
        "adaptive_lr": "true",
        "perturbation.0.kind": "weight_corruption",
        "perturbation.0.magnitude": repr(float(magnitude)),
        "perturbation.0.start": "200",
        "perturbation.0.end": "249",
        "perturbation.0.layer": "0",
        "perturbation.0.fraction": "0.1",
    }
    kv.update({k: str(v) for k, v in overrides.items()})
    return apply_overrides(ExperimentSpec(), kv)


def baseline_of(spec: ExperimentSpec) -> ExperimentSpec:
    """Same workload, every regulator and the adaptive learning rate off."""
    return apply_overrides(spec, {"regulation": "false", "adaptive_lr": "false", "scales": "none"})


def regulators_only(spec: ExperimentSpec) -> ExperimentSpec:
    """All four regulators on but a fixed learning rate."""
    return apply_overrides(spec, {"adaptive_lr": "false"})


def replicate(spec: ExperimentSpec, seeds: int) -> list:
    return [run(replace(spec, seed=spec.seed + r, data_seed=spec.data_seed + r), write=False) for r in range(seeds)]


@dataclass
class ArmResult:
    label: str
    magnitude: float
    failures: int
    runs: int
    recovered: int
    steps_to_recover: list = field(default_factory=list)
    flops: list = field(default_factory=list)
    override_steps: list = field(default_factory=list)

    @property
    def recovered_fraction(self) -> float:
        return self.recovered / self.runs if self.runs else 0.0


def _arm(label: str, spec: ExperimentSpec, magnitude: float, seeds: int) -> ArmResult:
    spec = apply_overrides(spec, {"perturbation.0.magnitude": repr(float(magnitude))})
    results = replicate(spec, seeds)
    return ArmResult(
        label=label,
        magnitude=magnitude,
        failures=sum(r.failures > 0 for r in results),
        runs=len(results),
        recovered=sum(bool(r.recovered_fraction) and r.recovered_fraction >= 1.0 for r in results),
        steps_to_recover=[r.steps_to_recover for r in results],
        flops=[r.regulator_flops for r in results],
        override_steps=[r.override_steps for r in results],
    )


@dataclass
class FailureBenchmark:
    nominal: dict            # arm label -> ArmResult at the stated magnitude
    escalated_magnitude: float | None
    escalated: dict          # arm label -> ArmResult at the escalated magnitude
    ladder_trace: list       # (magnitude, baseline failures)


def failure_benchmark(seeds: int = 20, ladder=DEFAULT_LADDER, spec: ExperimentSpec | None = None) -> FailureBenchmark:
    spec = spec or perturbation_spec()
    stated = ladder[0]
    nominal = {
        "baseline": _arm("baseline", baseline_of(spec), stated, seeds),
        "msth": _arm("msth", spec, stated, seeds),
        "regulators-only": _arm("regulators-only", regulators_only(spec), stated, seeds),
    }
    trace = [(stated, nominal["baseline"].failures)]
    escalated_mag, escalated = (stated, nominal) if nominal["baseline"].failures > 0 else (None, {})
    if escalated_mag is None:
        for mag in ladder[1:]:
            base = _arm("baseline", baseline_of(spec), mag, seeds)
            trace.append((mag, base.failures))
            if base.failures > 0:
                escalated_mag = mag
                escalated = {
                    "baseline": base,
                    "msth": _arm("msth", spec, mag, seeds),
                    "regulators-only": _arm("regulators-only", regulators_only(spec), mag, seeds),
                }
                break
    return FailureBenchmark(nominal, escalated_mag, escalated, trace)


@dataclass
class CoordinationBenchmark:
    magnitude: float
    flops_on: list
    flops_off: list
    override_steps: list

    @property
    def reductions(self) -> list:
        return [(off - on) / off if off else 0.0 for on, off in zip(self.flops_on, self.flops_off)]

    @property
    def mean_reduction(self) -> float:
        r = self.reductions
        return sum(r) / len(r) if r else 0.0


def coordination_benchmark(magnitude: float, seeds: int = 20, spec: ExperimentSpec | None = None) -> CoordinationBenchmark:
    spec = spec or perturbation_spec()
    on = _arm("coord-on", apply_overrides(spec, {"coordination": "true"}), magnitude, seeds)
    off = _arm("coord-off", apply_overrides(spec, {"coordination": "false"}), magnitude, seeds)
    return CoordinationBenchmark(magnitude, on.flops, off.flops, on.override_steps)


def nominal_spec(**overrides) -> ExperimentSpec:
    kv = {
        "name": "nominal",
        "dataset.kind": "spirals",
        "dataset.n": "600",
        "network.hidden": "32, 32",
        "optimizer.kind": "adam",
        "optimizer.lr": "0.01",
        "max_steps": "2000",
        "patience": "0",
        "scales": "full",
    }
    kv.update({k: str(v) for k, v in overrides.items()})
    return apply_overrides(ExperimentSpec(), kv)


def nominal_realism(spec: ExperimentSpec | None = None):
    return run(spec or nominal_spec(), write=False)


__all__ = [
    "ArmResult", "CoordinationBenchmark", "FailureBenchmark", "baseline_of", "coordination_benchmark",
    "failure_benchmark", "load_config", "nominal_realism", "nominal_spec", "perturbation_spec",
    "regulators_only",
]
