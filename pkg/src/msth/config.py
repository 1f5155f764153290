"""Experiment specification and the flat dotted-key config format.

A config file is a list of ``key = value`` lines, ``#`` starts a comment::

    dataset.kind = spirals
    network.hidden = 32, 32
    regulator.calcium_threshold = 0.08
    schedule.fast_every = 10
    perturbation.0.kind = weight_corruption
    perturbation.0.magnitude = 10

CLI ``--set key=value`` flags use the same keys and win over the file.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .network import SCALE_PRESETS, ScaleSwitches
from .numerics import MSTHError
from .regulators import RegulatorConfig, StepSchedule
from .training import PerturbationKind, PerturbationSpec


class ConfigError(MSTHError):
    def __init__(self, message: str):
        super().__init__("config-error", message)


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "spirals"
    n: int = 600
    noise: float = 0.2
    features: int = 2
    separation: float = 4.0
    path: str = ""
    label_column: str = "label"


@dataclass(frozen=True)
class NetworkSpec:
    hidden: tuple = (32, 32)
    activation: str = "relu"
    regulate_output: bool = False


@dataclass(frozen=True)
class OptimSpec:
    kind: str = "adam"
    lr: float = 0.001
    weight_decay: float = 1e-5


@dataclass(frozen=True)
class RecoverySpec:
    band: float = 0.05
    horizon: int = 500
    baseline_window: int = 10


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "experiment"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    optimizer: OptimSpec = field(default_factory=OptimSpec)
    scales: ScaleSwitches = field(default_factory=ScaleSwitches)
    regulation: bool = True
    coordination: bool = True
    adaptive_lr: bool = False
    loss: str = "cross_entropy"
    epochs: int = 10
    max_steps: int = 0
    batch_size: int = 32
    k_folds: int = 1
    seed: int = 42
    data_seed: int = 2023
    eval_every: int = 1
    patience: int = 20
    perf_window: int = 20
    recovery: RecoverySpec = field(default_factory=RecoverySpec)
    regulator: RegulatorConfig = field(default_factory=RegulatorConfig)
    perturbations: tuple = ()
    output_dir: str = "runs/experiment"

    def validate(self) -> "ExperimentSpec":
        if self.dataset.kind not in ("spirals", "blobs", "tabular"):
            raise ConfigError(f"dataset.kind must be spirals, blobs or tabular, not {self.dataset.kind!r}")
        if self.dataset.kind == "tabular" and not self.dataset.path:
            raise ConfigError("dataset.path is required for tabular data")
        if self.loss not in ("mse", "cross_entropy"):
            raise ConfigError(f"loss must be mse or cross_entropy, not {self.loss!r}")
        if self.optimizer.kind not in ("sgd", "adam"):
            raise ConfigError(f"optimizer.kind must be sgd or adam, not {self.optimizer.kind!r}")
        if self.network.activation not in ("relu", "tanh", "identity"):
            raise ConfigError(f"unknown activation {self.network.activation!r}")
        if any(h < 1 for h in self.network.hidden):
            raise ConfigError("hidden sizes must be >= 1")
        if self.batch_size < 1 or self.epochs < 0 or self.max_steps < 0 or self.eval_every < 1:
            raise ConfigError("batch_size/eval_every must be >= 1; epochs/max_steps >= 0")
        if self.epochs == 0 and self.max_steps == 0:
            raise ConfigError("set epochs or max_steps")
        if self.k_folds < 1:
            raise ConfigError("k_folds must be >= 1")
        n_layers = len(self.network.hidden) + 1
        for p in self.perturbations:
            if p.target_layer is not None and not 0 <= p.target_layer < n_layers:
                raise ConfigError(f"perturbation targets layer {p.target_layer}, network has {n_layers}")
        return self


SECTIONS = {
    "dataset": DatasetSpec,
    "network": NetworkSpec,
    "optimizer": OptimSpec,
    "recovery": RecoverySpec,
    "regulator": RegulatorConfig,
    "scales": ScaleSwitches,
}
PERTURBATION_KEYS = {
    "kind": "kind", "magnitude": "magnitude", "start": "start_step", "end": "end_step",
    "layer": "target_layer", "fraction": "fraction",
}


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _coerce(value: str, current, key: str):
    try:
        if isinstance(current, bool):
            low = value.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(value)
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, tuple):
            parts = [p.strip() for p in value.split(",") if p.strip()]
            return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {type(current).__name__}") from None
    return value


def _set_field(obj, name: str, value: str, key: str):
    names = {f.name for f in fields(obj)}
    if name not in names:
        raise ConfigError(f"unknown key {key!r}")
    return replace(obj, **{name: _coerce(value, getattr(obj, name), key)})


def apply_overrides(spec: ExperimentSpec, kv: dict[str, str]) -> ExperimentSpec:
    perturb: dict[int, dict] = {}
    for i, p in enumerate(spec.perturbations):
        perturb[i] = dataclasses.asdict(p)
        perturb[i]["kind"] = p.kind.value
    try:
        for key, value in kv.items():
            parts = key.split(".")
            head = parts[0]
            if head == "scales" and len(parts) == 1:
                if value not in SCALE_PRESETS:
                    raise ConfigError(f"scales preset must be one of {sorted(SCALE_PRESETS)}")
                spec = replace(spec, scales=SCALE_PRESETS[value])
            elif head == "schedule" and len(parts) == 2:
                sched = _set_field(spec.regulator.schedule, parts[1], value, key)
                spec = replace(spec, regulator=replace(spec.regulator, schedule=sched))
            elif head in SECTIONS and len(parts) == 2:
                spec = replace(spec, **{head: _set_field(getattr(spec, head), parts[1], value, key)})
            elif head == "perturbation" and len(parts) == 3:
                try:
                    idx = int(parts[1])
                except ValueError:
                    raise ConfigError(f"{key}: perturbation index must be an integer") from None
                if parts[2] not in PERTURBATION_KEYS:
                    raise ConfigError(f"unknown key {key!r}")
                perturb.setdefault(idx, {})[PERTURBATION_KEYS[parts[2]]] = value
            elif len(parts) == 1 and head not in SECTIONS and head != "perturbations":
                spec = _set_field(spec, head, value, key)
            else:
                raise ConfigError(f"unknown key {key!r}")
        plist = []
        for idx in sorted(perturb):
            d = perturb[idx]
            missing = {"kind", "magnitude", "start_step", "end_step"} - d.keys()
            if missing:
                raise ConfigError(f"perturbation.{idx} missing {sorted(missing)}")
            layer = d.get("target_layer", 0)
            plist.append(PerturbationSpec(
                kind=PerturbationKind(d["kind"]),
                magnitude=float(d["magnitude"]),
                start_step=int(d["start_step"]),
                end_step=int(d["end_step"]),
                target_layer=None if layer in (None, "", "none") else int(layer),
                fraction=float(d.get("fraction", 0.1)),
            ))
        spec = replace(spec, perturbations=tuple(plist))
    except ConfigError:
        raise
    except (MSTHError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return spec.validate()


def load_config(path=None, overrides=()) -> ExperimentSpec:
    kv = {}
    if path is not None:
        try:
            kv.update(parse_kv(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        kv[k.strip()] = v.strip()
    return apply_overrides(ExperimentSpec(), kv)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    return str(v)


def to_kv(spec: ExperimentSpec, include_output: bool = True) -> str:
    """Canonical, fully resolved config text. Round-trips through :func:`load_config`."""
    lines = []
    for f in fields(spec):
        v = getattr(spec, f.name)
        if f.name == "output_dir" and not include_output:
            continue
        if f.name == "perturbations":
            for i, p in enumerate(v):
                lines.append(f"perturbation.{i}.kind = {p.kind.value}")
                lines.append(f"perturbation.{i}.magnitude = {p.magnitude!r}")
                lines.append(f"perturbation.{i}.start = {p.start_step}")
                lines.append(f"perturbation.{i}.end = {p.end_step}")
                lines.append(f"perturbation.{i}.layer = {'none' if p.target_layer is None else p.target_layer}")
                lines.append(f"perturbation.{i}.fraction = {p.fraction!r}")
        elif f.name == "regulator":
            for rf in fields(v):
                if rf.name == "schedule":
                    for sf in fields(v.schedule):
                        lines.append(f"schedule.{sf.name} = {_fmt(getattr(v.schedule, sf.name))}")
                else:
                    lines.append(f"regulator.{rf.name} = {_fmt(getattr(v, rf.name))}")
        elif dataclasses.is_dataclass(v):
            for sf in fields(v):
                lines.append(f"{f.name}.{sf.name} = {_fmt(getattr(v, sf.name))}")
        else:
            lines.append(f"{f.name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def spec_hash(spec: ExperimentSpec) -> str:
    """Hash of everything that influences results (the output location does not)."""
    return hashlib.sha256(to_kv(spec, include_output=False).encode()).hexdigest()[:16]


__all__ = [
    "ConfigError", "DatasetSpec", "ExperimentSpec", "NetworkSpec", "OptimSpec", "RecoverySpec",
    "StepSchedule", "apply_overrides", "load_config", "parse_kv", "spec_hash", "to_kv",
]
