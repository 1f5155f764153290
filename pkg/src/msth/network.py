"""Dense feed-forward network with the regulators wired into its layers.

Forward pass: ``a = act(W x + b)`` per layer, then (on schedule ticks) the
ultra-fast check/suppression and the calcium pipeline. After each optimizer
update, :func:`regulate_weights` applies synaptic scaling followed by the
structural step, i.e. ``slow(medium(W))``.

Regulation is out-of-band for gradients: suppression multipliers are cached
in the forward pass and treated as constants by :func:`backward`.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .coordinator import (
    CoordinatorState,
    FlopKind,
    InterventionLedger,
    ScaleRequestSet,
    coordinate,
    update_emergency_counter,
    update_fire_clock,
)
from .health import HealthReport, assess_health, combine_health
from .numerics import MSTHError
from .regulators import (
    InterventionOutcome,
    NeuronState,
    RegulatorConfig,
    Scale,
    accumulate_activity,
    detect_emergency,
    emergency_consensus,
    medium_scale,
    regulate_calcium,
    structural_step,
    suppression_multiplier,
    update_calcium_from_activity,
)

ACTIVATIONS = ("relu", "tanh", "identity")
CHECKPOINT_VERSION = 1


def _act(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass(frozen=True)
class ScaleSwitches:
    ultra: bool = True
    fast: bool = True
    medium: bool = True
    slow: bool = True

    def enabled(self, scale: Scale) -> bool:
        return (self.ultra, self.fast, self.medium, self.slow)[scale]

    def any(self) -> bool:
        return self.ultra or self.fast or self.medium or self.slow


# Ablation presets. "single" is calcium homeostasis alone.
SCALE_PRESETS = {
    "none": ScaleSwitches(False, False, False, False),
    "single": ScaleSwitches(False, True, False, False),
    "dual-slow": ScaleSwitches(False, False, True, True),
    "fast-medium": ScaleSwitches(False, True, True, False),
    "full": ScaleSwitches(True, True, True, True),
}


@dataclass
class HomeostaticLayer:
    W: np.ndarray
    b: np.ndarray
    state: NeuronState
    activation: str = "relu"
    regulated: bool = True
    # forward cache: input, pre-activation, raw activation, suppression multiplier
    cache: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise MSTHError("invalid-config", f"unknown activation {self.activation!r}")
        if self.b.shape != (self.W.shape[0],) or self.state.calcium.shape != self.b.shape:
            raise MSTHError("shape-mismatch", "bias/calcium length must equal rows(W)")

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape


@dataclass
class NetworkModel:
    layers: list
    regulation_enabled: bool = True
    scales: ScaleSwitches = field(default_factory=ScaleSwitches)
    coordination: bool = True

    def __post_init__(self):
        if not self.layers:
            raise MSTHError("invalid-config", "network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.W.shape[0] != nxt.W.shape[1]:
                raise MSTHError("shape-mismatch", f"layer dims {prev.W.shape} -> {nxt.W.shape}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    def scale_on(self, scale: Scale) -> bool:
        return self.regulation_enabled and self.scales.enabled(scale)

    def monitored(self) -> list[HomeostaticLayer]:
        regulated = [l for l in self.layers if l.regulated]
        return regulated or list(self.layers)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.W, layer.b))
        return out


def build_model(
    sizes,
    activations=None,
    *,
    seed: int = 42,
    regulate_output: bool = False,
    scales: ScaleSwitches | None = None,
    regulation_enabled: bool = True,
    coordination: bool = True,
) -> NetworkModel:
    """Glorot-uniform initialised network. ``sizes`` lists the widths, input first."""
    sizes = list(sizes)
    if len(sizes) < 2:
        raise MSTHError("invalid-config", "need at least input and output sizes")
    n_layers = len(sizes) - 1
    if activations is None:
        activations = ["relu"] * (n_layers - 1) + ["identity"]
    if len(activations) != n_layers:
        raise MSTHError("invalid-config", "one activation per layer")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-s, s, size=(fan_out, fan_in))
        is_output = i == n_layers - 1
        layers.append(
            HomeostaticLayer(
                W=W,
                b=np.zeros(fan_out),
                state=NeuronState.initial(fan_out),
                activation=activations[i],
                regulated=regulate_output or not is_output,
            )
        )
    return NetworkModel(
        layers,
        regulation_enabled=regulation_enabled,
        scales=scales if scales is not None else ScaleSwitches(),
        coordination=coordination,
    )


def plain_forward(model: NetworkModel, x) -> np.ndarray:
    """Reference MLP forward pass with no regulation and no caching."""
    h = np.asarray(x, dtype=np.float64)
    for layer in model.layers:
        h = _act(layer.activation, h @ layer.W.T + layer.b)
    return h


def _batch(x, model: NetworkModel) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise MSTHError("shape-mismatch", f"input shape {x.shape} vs input dim {model.input_dim}")
    return x, squeeze


def forward(
    model: NetworkModel,
    x,
    coord: CoordinatorState,
    cfg: RegulatorConfig,
    step: int,
    ledger: InterventionLedger | None = None,
    perturb=None,
) -> tuple[np.ndarray, list[InterventionOutcome], CoordinatorState]:
    """Regulated forward pass.

    ``perturb``, if given, is called as ``perturb(layer_index, z)`` and may
    return a modified pre-activation (used for activation-noise injection).
    Returns the network output, every regulator outcome of this pass, and the
    updated coordinator state.
    """
    h, squeeze = _batch(x, model)
    sched = cfg.schedule
    ultra_tick = model.scale_on(Scale.ULTRA) and sched.is_tick(Scale.ULTRA, step)
    fast_tick = model.scale_on(Scale.FAST) and sched.is_tick(Scale.FAST, step)

    outcomes: list[InterventionOutcome] = []
    ultra_active = False
    suppressed = False
    per_neuron = []
    for idx, layer in enumerate(model.layers):
        z = h @ layer.W.T + layer.b
        if perturb is not None:
            z = perturb(idx, z)
        a = _act(layer.activation, z)
        mult = None
        s = np.mean(np.abs(a), axis=0)
        if model.regulation_enabled and layer.regulated:
            if ultra_tick:
                if ledger is not None:
                    ledger.charge(FlopKind.DETECTION, s.size)
                if emergency_consensus(s, cfg):
                    ultra_active = True
                    if detect_emergency(s, coord.steps_since_last_fire, coord.consecutive_fires, cfg):
                        mult = suppression_multiplier(a, cfg)
                        n_hit = int(np.count_nonzero(mult != 1.0))
                        if ledger is not None:
                            ledger.charge(FlopKind.SUPPRESSION, s.size)
                        suppressed = True
                        detail = {"suppressed": float(n_hit), "max_abs": float(np.max(np.abs(a)))}
                        outcomes.append(InterventionOutcome(Scale.ULTRA, True, detail, idx))
        a_reg = a if mult is None else a * mult
        layer.cache = (h, z, a, mult)
        if mult is not None:
            s = np.mean(np.abs(a_reg), axis=0)
        per_neuron.append(s)
        h = a_reg

    if model.regulation_enabled:
        if ultra_tick:
            coord = update_fire_clock(coord, suppressed)
            coord = update_emergency_counter(coord, ultra_active)
        requests = {Scale.ULTRA} if ultra_active else set()
        if fast_tick:
            requests.add(Scale.FAST)
        if model.coordination:
            granted, coord = coordinate(ScaleRequestSet(frozenset(requests)), coord)
        else:
            granted = ScaleRequestSet(frozenset(requests))
        # a blocked fast scale still integrates calcium; only the check/pump is held back
        for idx, layer in enumerate(model.layers):
            s = per_neuron[idx]
            state = layer.state
            if not layer.regulated:
                layer.state = replace(state, activations=s)
                continue
            if fast_tick:
                state = replace(state, calcium=update_calcium_from_activity(state.calcium, s, cfg))
                if Scale.FAST in granted:
                    if ledger is not None:
                        ledger.charge(FlopKind.CALCIUM_CHECK, s.size)
                    c_new, out = regulate_calcium(state.calcium, cfg)
                    if out.fired:
                        if ledger is not None:
                            ledger.charge(FlopKind.CALCIUM_PUMP, s.size)
                        outcomes.append(replace(out, layer=idx))
                    state = replace(state, calcium=c_new)
            layer.state = accumulate_activity(state, s)
        coord = replace(coord, step_counter=coord.step_counter + 1)
    else:
        for layer, s in zip(model.layers, per_neuron):
            layer.state = replace(layer.state, activations=s)

    return (h[0] if squeeze else h), outcomes, coord


def regulate_weights(
    model: NetworkModel,
    coord: CoordinatorState,
    cfg: RegulatorConfig,
    step: int,
    ledger: InterventionLedger | None = None,
) -> list[InterventionOutcome]:
    """Medium then slow weight regulation on their schedule ticks."""
    if not model.regulation_enabled:
        return []
    blocked = model.coordination and coord.override_active
    outcomes = []
    medium_tick = model.scales.medium and cfg.schedule.is_tick(Scale.MEDIUM, step)
    slow_tick = model.scales.slow and cfg.schedule.is_tick(Scale.SLOW, step)
    for idx, layer in enumerate(model.layers):
        if not layer.regulated:
            continue
        if medium_tick and not blocked and layer.state.accum_steps > 0:
            if ledger is not None:
                ledger.charge(FlopKind.MEDIUM_SCALE, layer.W.size)
            layer.W, layer.state, out = medium_scale(layer.W, layer.state, cfg)
            if out.fired:
                outcomes.append(replace(out, layer=idx))
        if slow_tick and not blocked:
            if ledger is not None:
                ledger.charge(FlopKind.STRUCTURAL, layer.W.size)
            layer.W, out = structural_step(layer.W, layer.state, cfg)
            if out.fired:
                outcomes.append(replace(out, layer=idx))
    return outcomes


def network_health(model: NetworkModel) -> HealthReport:
    reports = []
    for layer in model.monitored():
        level = float(np.mean(np.abs(layer.state.activations))) if layer.state.activations.size else 0.0
        reports.append(assess_health(level, layer.state.calcium, layer.W))
    return combine_health(reports)


@dataclass
class GradientSet:
    dW: list
    db: list


def _loss_and_delta(out: np.ndarray, y, loss_kind: str) -> tuple[float, np.ndarray]:
    B = out.shape[0]
    if loss_kind == "mse":
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1 and out.shape[1] == 1 and y.shape[0] == B:
            y = y[:, None]
        if y.shape != out.shape:
            raise MSTHError("bad-target", f"target shape {y.shape} vs output {out.shape}")
        diff = out - y
        return 0.5 * float(np.sum(diff * diff)) / B, diff / B
    if loss_kind == "cross_entropy":
        y = np.asarray(y)
        if y.ndim == 2:
            if y.shape != out.shape:
                raise MSTHError("bad-target", "one-hot target shape mismatch")
            idx = np.argmax(y, axis=1)
        else:
            if y.shape != (B,) or not np.issubdtype(y.dtype, np.integer):
                if y.shape == (B,) and np.all(np.mod(y, 1) == 0):
                    y = y.astype(np.int64)
                else:
                    raise MSTHError("bad-target", "class indices expected")
            idx = y
        if np.any(idx < 0) or np.any(idx >= out.shape[1]):
            raise MSTHError("bad-target", "class index out of range")
        shifted = out - np.max(out, axis=1, keepdims=True)
        logsum = np.log(np.sum(np.exp(shifted), axis=1))
        logp = shifted - logsum[:, None]
        loss = -float(np.sum(logp[np.arange(B), idx])) / B
        delta = np.exp(logp)
        delta[np.arange(B), idx] -= 1.0
        return loss, delta / B
    raise MSTHError("invalid-config", f"unknown loss {loss_kind!r}")


def backward(model: NetworkModel, x, y, loss_kind: str = "mse", use_cache: bool = False) -> tuple[float, GradientSet]:
    """Loss and parameter gradients.

    With ``use_cache`` the graph of the last :func:`forward` call is
    differentiated, suppression multipliers held constant. Otherwise a plain
    unregulated forward pass is run first.
    """
    xb, squeeze = _batch(x, model)
    if not use_cache:
        h = xb
        for layer in model.layers:
            z = h @ layer.W.T + layer.b
            layer.cache = (h, z, _act(layer.activation, z), None)
            h = layer.cache[2]
    last = model.layers[-1].cache
    out = last[2] if last[3] is None else last[2] * last[3]
    yb = np.asarray(y)
    if squeeze:
        yb = yb.reshape(1, -1) if (loss_kind == "mse" or yb.ndim == 1) else yb.reshape(1)
    loss, delta = _loss_and_delta(out, yb, loss_kind)

    dWs, dbs = [None] * len(model.layers), [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        h_in, z, a, mult = layer.cache
        if mult is not None:
            delta = delta * mult
        dz = delta * _act_grad(layer.activation, z, a)
        dWs[i] = dz.T @ h_in
        dbs[i] = np.sum(dz, axis=0)
        delta = dz @ layer.W
    return loss, GradientSet(dWs, dbs)


def predict(model: NetworkModel, x) -> np.ndarray:
    return plain_forward(model, x)


# -- checkpoints --------------------------------------------------------------

def config_hash(cfg: RegulatorConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def to_checkpoint(model: NetworkModel, cfg: RegulatorConfig) -> dict:
    return {
        "format": "msth-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash(cfg),
        "regulation_enabled": model.regulation_enabled,
        "coordination": model.coordination,
        "scales": asdict(model.scales),
        "layers": [
            {
                "shape": list(l.W.shape),
                "activation": l.activation,
                "regulated": l.regulated,
                "W": l.W.tolist(),
                "b": l.b.tolist(),
                "state": {
                    "activations": l.state.activations.tolist(),
                    "calcium": l.state.calcium.tolist(),
                    "activity_accum": l.state.activity_accum,
                    "accum_steps": l.state.accum_steps,
                    "perf_accumulator": list(l.state.perf_accumulator),
                },
            }
            for l in model.layers
        ],
    }


def from_checkpoint(blob: dict, cfg: RegulatorConfig | None = None) -> NetworkModel:
    if blob.get("format") != "msth-checkpoint" or blob.get("version") != CHECKPOINT_VERSION:
        raise MSTHError("bad-checkpoint", "unrecognised checkpoint format/version")
    if cfg is not None and blob["config_hash"] != config_hash(cfg):
        raise MSTHError("bad-checkpoint", "config hash mismatch")
    layers = []
    for spec in blob["layers"]:
        st = spec["state"]
        state = NeuronState(
            activations=np.array(st["activations"], dtype=np.float64),
            calcium=np.array(st["calcium"], dtype=np.float64),
            activity_accum=float(st["activity_accum"]),
            accum_steps=int(st["accum_steps"]),
            perf_accumulator=tuple(st["perf_accumulator"]),
        )
        W = np.array(spec["W"], dtype=np.float64).reshape(spec["shape"])
        layers.append(HomeostaticLayer(W, np.array(spec["b"], dtype=np.float64), state, spec["activation"], spec["regulated"]))
    return NetworkModel(
        layers,
        regulation_enabled=blob["regulation_enabled"],
        scales=ScaleSwitches(**blob["scales"]),
        coordination=blob["coordination"],
    )


def save_checkpoint(model: NetworkModel, cfg: RegulatorConfig, path) -> None:
    Path(path).write_text(json.dumps(to_checkpoint(model, cfg), sort_keys=True))


def load_checkpoint(path, cfg: RegulatorConfig | None = None) -> NetworkModel:
    return from_checkpoint(json.loads(Path(path).read_text()), cfg)
