"""Training engine: optimizers, the regulated train step, perturbations, k-fold splits."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .coordinator import CoordinatorState, InterventionLedger
from .health import HealthReport, StabilityTracker, adaptive_lr
from .network import NetworkModel, backward, forward, network_health, regulate_weights
from .numerics import MSTHError, all_finite, clamp01
from .regulators import NeuronState, RegulatorConfig, Scale


# -- optimizers -------------------------------------------------------------

@dataclass
class OptimizerState:
    kind: str = "adam"
    base_lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise MSTHError("invalid-config", f"unknown optimizer {self.kind!r}")

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float | None = None) -> None:
        """In-place update. Weight decay is L2 added to the gradient."""
        lr = self.base_lr if lr is None else lr
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            if self.weight_decay:
                g = g + self.weight_decay * p
            if self.kind == "sgd":
                p -= lr * g
                continue
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- perturbations ----------------------------------------------------------

class PerturbationKind(enum.Enum):
    ACTIVATION_NOISE = "activation_noise"
    WEIGHT_CORRUPTION = "weight_corruption"
    INPUT_SHIFT = "input_shift"


@dataclass(frozen=True)
class PerturbationSpec:
    kind: PerturbationKind
    magnitude: float
    start_step: int
    end_step: int
    target_layer: int | None = 0
    fraction: float = 0.1

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", PerturbationKind(self.kind))
        if self.magnitude < 0:
            raise MSTHError("invalid-config", "perturbation magnitude must be >= 0")
        if self.start_step > self.end_step:
            raise MSTHError("invalid-config", "start_step must be <= end_step")

    def active(self, step: int) -> bool:
        return self.start_step <= step <= self.end_step


def _check_layer(model: NetworkModel, idx) -> int:
    idx = 0 if idx is None else idx
    if not 0 <= idx < len(model.layers):
        raise MSTHError("invalid-layer", f"no layer {idx}")
    return idx


def corruption_mask(shape, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask with exactly round(fraction * size) entries set (at least one)."""
    size = int(np.prod(shape))
    k = max(1, int(round(fraction * size)))
    flat = np.zeros(size, dtype=bool)
    flat[rng.choice(size, size=k, replace=False)] = True
    return flat.reshape(shape)


def inject_perturbation(target, spec: PerturbationSpec, rng: np.random.Generator):
    """Apply one perturbation event and return the perturbed target.

    * input shift: ``target`` is a feature batch; returns ``target + magnitude``
    * activation noise: ``target`` is a pre-activation array; adds N(0, magnitude^2)
    * weight corruption: ``target`` is a model; scales a random ``fraction`` of the
      target layer's weights by ``1 + magnitude`` in place
    """
    if spec.kind is PerturbationKind.INPUT_SHIFT:
        return np.asarray(target, dtype=np.float64) + spec.magnitude
    if spec.kind is PerturbationKind.ACTIVATION_NOISE:
        z = np.asarray(target, dtype=np.float64)
        if spec.magnitude == 0:
            return z
        return z + rng.normal(0.0, spec.magnitude, size=z.shape)
    idx = _check_layer(target, spec.target_layer)
    layer = target.layers[idx]
    mask = corruption_mask(layer.W.shape, spec.fraction, rng)
    layer.W = np.where(mask, layer.W * (1.0 + spec.magnitude), layer.W)
    return target


class PerturbationSchedule:
    """Drives a list of perturbations over a run.

    Weight corruption is a stuck-at fault: the chosen entries are pinned to
    their corrupted values for every step of the window, then released.
    """

    def __init__(self, specs, seed: int):
        self.specs = list(specs)
        self.rng = np.random.default_rng(seed)
        self._pinned: dict[int, tuple[int, np.ndarray, np.ndarray]] = {}

    def shift_inputs(self, step: int, xb: np.ndarray) -> np.ndarray:
        for spec in self.specs:
            if spec.kind is PerturbationKind.INPUT_SHIFT and spec.active(step):
                xb = inject_perturbation(xb, spec, self.rng)
        return xb

    def activation_hook(self, step: int):
        noisy = [s for s in self.specs if s.kind is PerturbationKind.ACTIVATION_NOISE and s.active(step)]
        if not noisy:
            return None

        def hook(layer_idx, z):
            for spec in noisy:
                if (spec.target_layer or 0) == layer_idx:
                    z = inject_perturbation(z, spec, self.rng)
            return z

        return hook

    def corrupt_weights(self, step: int, model: NetworkModel) -> None:
        for i, spec in enumerate(self.specs):
            if spec.kind is not PerturbationKind.WEIGHT_CORRUPTION or not spec.active(step):
                continue
            idx = _check_layer(model, spec.target_layer)
            layer = model.layers[idx]
            if i not in self._pinned:
                mask = corruption_mask(layer.W.shape, spec.fraction, self.rng)
                values = layer.W * (1.0 + spec.magnitude)
                self._pinned[i] = (idx, mask, values)
            _, mask, values = self._pinned[i]
            layer.W = np.where(mask, values, layer.W)

    def any_active(self, step: int) -> bool:
        return any(s.active(step) for s in self.specs)


# -- performance accumulator -------------------------------------------------

def update_performance(state: NeuronState, window_losses, window: int = 20) -> NeuronState:
    """Append ``mean(previous window) / mean(current window)`` to the performance history.

    ``window_losses`` holds recent per-step losses, most recent last. Nothing
    happens until two full windows are available.
    """
    losses = list(window_losses)
    if len(losses) < 2 * window:
        return state
    prev = losses[-2 * window:-window]
    cur = losses[-window:]
    ratio = (sum(prev) / window) / max(sum(cur) / window, 1e-12)
    return replace(state, perf_accumulator=state.perf_accumulator + (ratio,))


# -- splitting / stopping -----------------------------------------------------

def kfold_split(n: int, k: int, labels=None, seed: int = 2023) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold index sets, deterministic per seed."""
    if k < 2:
        raise MSTHError("invalid-config", "k must be >= 2")
    if k > n:
        raise MSTHError("invalid-config", f"k={k} exceeds n={n}")
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels)
    if labels.shape != (n,):
        raise MSTHError("shape-mismatch", "labels must have length n")
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            folds[(offset + j) % k].append(int(i))
        offset += len(idx)
    everything = np.arange(n)
    out = []
    for fold in folds:
        val = np.array(sorted(fold), dtype=np.int64)
        train = np.setdiff1d(everything, val)
        out.append((train, val))
    return out


def early_stopping(history, patience: int = 20) -> bool:
    """True once the best (highest) value is more than ``patience`` entries old."""
    history = list(history)
    if len(history) <= patience:
        return False
    best = int(np.argmax(history))
    return len(history) - 1 - best > patience


# -- train step -------------------------------------------------------------

@dataclass
class TrainRecord:
    step: int
    epoch: int
    loss: float
    val_metric: float
    health: HealthReport
    lr: float
    fired: tuple
    n_ultra: int
    override: bool
    flops: int
    failure_flag: bool = False


@dataclass
class Trainer:
    """Owns the mutable state of one training run."""

    model: NetworkModel
    cfg: RegulatorConfig = field(default_factory=RegulatorConfig)
    opt: OptimizerState = field(default_factory=OptimizerState)
    loss_kind: str = "cross_entropy"
    adaptive: bool = False
    perf_window: int = 20
    perturbations: PerturbationSchedule | None = None
    coord: CoordinatorState = field(default_factory=CoordinatorState)
    ledger: InterventionLedger = field(default_factory=InterventionLedger)
    stability: StabilityTracker = field(default_factory=StabilityTracker)
    losses: list = field(default_factory=list)
    step_count: int = 0
    failed: bool = False

    def _fail(self, step, epoch, val_metric) -> TrainRecord:
        self.failed = True
        nan = float("nan")
        return TrainRecord(
            step, epoch, nan, val_metric, HealthReport(nan, nan, nan, nan), nan, (False,) * 4,
            self.coord.consecutive_ultra, self.coord.override_active, self.ledger.regulator_flops, True,
        )

    def train_step(self, xb, yb, epoch: int = 0, val_metric: float = float("nan")) -> TrainRecord:
        if self.failed:
            raise MSTHError("run-failed", "no steps after a failure")
        if len(xb) == 0:
            raise MSTHError("empty-batch")
        self.step_count += 1
        step = self.step_count
        model, cfg = self.model, self.cfg
        hook = None
        if self.perturbations is not None:
            xb = self.perturbations.shift_inputs(step, xb)
            self.perturbations.corrupt_weights(step, model)
            hook = self.perturbations.activation_hook(step)

        with np.errstate(all="ignore"):
            try:
                out, outcomes, self.coord = forward(model, xb, self.coord, cfg, step, self.ledger, hook)
            except MSTHError as exc:
                if exc.code == "non-finite":
                    return self._fail(step, epoch, val_metric)
                raise
            if not all_finite(out):
                return self._fail(step, epoch, val_metric)
            loss, grads = backward(model, xb, yb, self.loss_kind, use_cache=True)
            if not math.isfinite(loss) or not all_finite(*grads.dW, *grads.db):
                return self._fail(step, epoch, val_metric)

            health = network_health(model)
            h_stab = self.stability.current
            if self.adaptive:
                lr = adaptive_lr(clamp01(health.h_system), h_stab, self.opt.base_lr)
            else:
                lr = self.opt.base_lr
            self.stability.update(health.h_system)
            health = replace(health, adaptive_lr=lr, h_stability=h_stab)

            flat_grads = []
            for dW, db in zip(grads.dW, grads.db):
                flat_grads.extend((dW, db))
            self.opt.step(model.parameters(), flat_grads, lr)
            if self.perturbations is not None:
                # keep stuck-at corruption pinned through the update
                self.perturbations.corrupt_weights(step, model)
            outcomes = outcomes + regulate_weights(model, self.coord, cfg, step, self.ledger)
            if not all_finite(*model.parameters()):
                return self._fail(step, epoch, val_metric)

        self.ledger.record(step, outcomes)
        self._track_performance(loss)
        fired = tuple(any(o.fired and o.scale == s for o in outcomes) for s in Scale)
        return TrainRecord(
            step, epoch, loss, val_metric, health, lr, fired,
            self.coord.consecutive_ultra, self.coord.override_active, self.ledger.regulator_flops,
        )

    def _track_performance(self, loss: float) -> None:
        self.losses.append(loss)
        w = self.perf_window
        if len(self.losses) >= 2 * w and len(self.losses) % w == 0:
            for layer in self.model.layers:
                layer.state = update_performance(layer.state, self.losses[-2 * w:], w)
            del self.losses[: -2 * w]


def train_step(trainer: Trainer, batch, step_epoch: int = 0) -> TrainRecord:
    xb, yb = batch
    return trainer.train_step(xb, yb, step_epoch)
