"""Experiment runner: data splits, the training loop, CSV/JSON writers, ablations and reports."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import ExperimentSpec, apply_overrides, parse_kv, spec_hash, to_kv
from .coordinator import InterventionLedger
from .data import DatasetError, Standardizer, generate_synthetic, read_tabular
from .health import enhancement_estimate, realism_score
from .network import build_model, plain_forward
from .numerics import MSTHError
from .regulators import Scale
from .training import OptimizerState, PerturbationSchedule, Trainer, early_stopping, kfold_split

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "step", "epoch", "loss", "val_metric",
    "h_activity", "h_calcium", "h_weights", "h_system", "lr",
    "fired_ultra", "fired_fast", "fired_medium", "fired_slow",
    "n_ultra", "override", "flops",
)
OUTPUT_ROOT_ENV = "MSTH_OUTPUT_ROOT"


def resolve_output(path) -> Path:
    path = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


# -- data -------------------------------------------------------------------

def load_dataset(spec: ExperimentSpec) -> tuple[np.ndarray, np.ndarray]:
    ds = spec.dataset
    if ds.kind == "tabular":
        X, y, _ = read_tabular(ds.path, ds.label_column)
        return X, y
    return generate_synthetic(ds.kind, ds.n, ds.noise, spec.data_seed, n_features=ds.features,
                              separation=ds.separation)


def holdout_split(labels, seed: int, fractions=(0.70, 0.15, 0.15)):
    """Stratified train/val/test index split."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        n_tr = int(round(fractions[0] * len(idx)))
        n_va = int(round(fractions[1] * len(idx)))
        parts[0].extend(idx[:n_tr])
        parts[1].extend(idx[n_tr:n_tr + n_va])
        parts[2].extend(idx[n_tr + n_va:])
    return tuple(np.array(sorted(p), dtype=np.int64) for p in parts)


def make_splits(spec: ExperimentSpec, y) -> list[tuple[np.ndarray, np.ndarray, np.ndarray | None]]:
    if spec.k_folds == 1:
        return [holdout_split(y, spec.data_seed)]
    return [(tr, va, None) for tr, va in kfold_split(len(y), spec.k_folds, y, spec.data_seed)]


def accuracy(model, X, y) -> float:
    if len(y) == 0:
        return float("nan")
    with np.errstate(all="ignore"):
        out = plain_forward(model, X)
    if not np.all(np.isfinite(out)):
        return 0.0
    return float(np.mean(np.argmax(out, axis=1) == y))


# -- single run -------------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    steps: int
    final_val: float
    test_metric: float | None
    failure_flag: bool
    failure_step: int | None
    pre_perturbation_val: float | None
    steps_to_recover: int | None
    recovered: bool | None
    override_steps: int
    ledger: dict
    regulator_flops: int
    realism: float
    final_health: dict


@dataclass
class RunSummary:
    name: str
    config_hash: str
    final_val_mean: float
    final_val_std: float
    failure_flag: bool
    failures: int
    steps_to_recover: float | None
    recovered_fraction: float | None
    counts: dict
    ratios: dict
    coordination_events: int
    realism_score: float
    enhancement: dict
    regulator_flops: int
    override_steps: int
    folds: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_time")
        return d


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_row(rec) -> list[str]:
    h = rec.health
    return [_fmt(x) for x in (
        rec.step, rec.epoch, float(rec.loss), float(rec.val_metric),
        float(h.h_activity), float(h.h_calcium), float(h.h_weights), float(h.h_system), float(rec.lr),
        *rec.fired, rec.n_ultra, rec.override, rec.flops,
    )]


def _recovery(spec: ExperimentSpec, evals: list[tuple[int, float]], last_step: int):
    if not spec.perturbations:
        return None, None, None
    start = min(p.start_step for p in spec.perturbations)
    end = max(p.end_step for p in spec.perturbations)
    before = [v for s, v in evals if start - spec.recovery.baseline_window <= s < start]
    if not before:
        return None, None, False
    pre = sum(before) / len(before)
    target = (1.0 - spec.recovery.band) * pre
    for s, v in evals:
        if s > end and s - end <= spec.recovery.horizon and v >= target:
            return pre, s - end, True
    return pre, None, False


def run_fold(spec: ExperimentSpec, X, y, split, fold: int, writer=None) -> FoldResult:
    train_idx, val_idx, test_idx = split
    scaler = Standardizer.fit(X[train_idx])
    Xs = scaler.transform(X)
    n_classes = int(np.max(y)) + 1
    Xtr, ytr = Xs[train_idx], y[train_idx]
    Xva, yva = Xs[val_idx], y[val_idx]
    targets = np.eye(n_classes)[ytr] if spec.loss == "mse" else ytr

    sizes = [X.shape[1], *spec.network.hidden, n_classes]
    acts = [spec.network.activation] * len(spec.network.hidden) + ["identity"]
    model = build_model(
        sizes, acts, seed=spec.seed, regulate_output=spec.network.regulate_output,
        scales=spec.scales, regulation_enabled=spec.regulation, coordination=spec.coordination,
    )
    opt = OptimizerState(spec.optimizer.kind, spec.optimizer.lr, weight_decay=spec.optimizer.weight_decay)
    perturb = PerturbationSchedule(spec.perturbations, seed=spec.seed + 7919 * fold) if spec.perturbations else None
    trainer = Trainer(model, spec.regulator, opt, spec.loss, spec.adaptive_lr, spec.perf_window, perturb)
    rng = np.random.default_rng(spec.data_seed + 104729 * (fold + 1))

    evals: list[tuple[int, float]] = []
    epoch_history: list[float] = []
    val_metric = accuracy(model, Xva, yva)
    failure_step = None
    override_steps = 0
    last = None
    max_steps = spec.max_steps if spec.max_steps > 0 else None
    epoch = 0
    done = False
    while not done:
        if max_steps is None and epoch >= spec.epochs:
            break
        order = rng.permutation(len(train_idx))
        for lo in range(0, len(order), spec.batch_size):
            batch = order[lo:lo + spec.batch_size]
            rec = trainer.train_step(Xtr[batch], targets[batch], epoch, val_metric)
            if not rec.failure_flag and rec.step % spec.eval_every == 0:
                val_metric = accuracy(model, Xva, yva)
                rec.val_metric = val_metric
                evals.append((rec.step, val_metric))
            if writer is not None:
                writer.writerow(_csv_row(rec))
            last = rec
            if rec.failure_flag:
                failure_step = rec.step
                done = True
                break
            override_steps += int(rec.override)
            if max_steps is not None and rec.step >= max_steps:
                done = True
                break
        epoch_history.append(val_metric)
        epoch += 1
        if not done and spec.patience > 0 and not spec.perturbations and early_stopping(epoch_history, spec.patience):
            break

    pre, to_recover, recovered = _recovery(spec, evals, trainer.step_count)
    if failure_step is not None and spec.perturbations:
        recovered = False
    ledger = trainer.ledger
    realism = realism_score(ledger.counts, ledger.coordination_events)
    h = last.health if last is not None else None
    return FoldResult(
        fold=fold,
        steps=trainer.step_count,
        final_val=val_metric,
        test_metric=None if test_idx is None or failure_step is not None else accuracy(model, Xs[test_idx], y[test_idx]),
        failure_flag=failure_step is not None,
        failure_step=failure_step,
        pre_perturbation_val=pre,
        steps_to_recover=to_recover,
        recovered=recovered,
        override_steps=override_steps,
        ledger=ledger.summary(),
        regulator_flops=ledger.regulator_flops,
        realism=realism.score,
        final_health={} if h is None else {
            "h_activity": h.h_activity, "h_calcium": h.h_calcium, "h_weights": h.h_weights, "h_system": h.h_system,
        },
    )


def _mean_std(values) -> tuple[float, float]:
    vals = [v for v in values if v is not None and not math.isnan(v)]
    if not vals:
        return float("nan"), float("nan")
    return float(np.mean(vals)), float(np.std(vals))


def run(spec: ExperimentSpec, write: bool = True) -> RunSummary:
    """Run every fold of ``spec``; write per-step CSVs, a JSON summary and a config echo."""
    t0 = time.perf_counter()
    spec.validate()
    X, y = load_dataset(spec)
    n_classes = int(np.max(y)) + 1
    if n_classes < 2:
        raise DatasetError("empty-dataset", "need at least two classes")
    out = resolve_output(spec.output_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(to_kv(spec, include_output=False))

    folds = []
    for fold, split in enumerate(make_splits(spec, y)):
        if write:
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            folds.append(run_fold(spec, X, y, split, fold, writer))
            (out / f"steps_fold{fold}.csv").write_text(buf.getvalue())
        else:
            folds.append(run_fold(spec, X, y, split, fold))

    counts = [sum(f.ledger["counts"][s.label] for f in folds) for s in Scale]
    coord_events = sum(f.ledger["coordination_events"] for f in folds)
    total = sum(counts)
    ratios = {s.label: (counts[int(s)] / total if total else 0.0) for s in Scale}
    realism = realism_score(counts, coord_events)

    agg = InterventionLedger(counts=counts, coordination_events=coord_events)
    total_steps = max(1, sum(f.steps for f in folds))
    enh = enhancement_estimate(agg, total_steps)
    mean_val, std_val = _mean_std([f.final_val for f in folds])
    recov = [f.steps_to_recover for f in folds if f.recovered]
    summary = RunSummary(
        name=spec.name,
        config_hash=spec_hash(spec),
        final_val_mean=mean_val,
        final_val_std=std_val,
        failure_flag=any(f.failure_flag for f in folds),
        failures=sum(f.failure_flag for f in folds),
        steps_to_recover=float(np.mean(recov)) if recov else None,
        recovered_fraction=(sum(bool(f.recovered) for f in folds) / len(folds)) if spec.perturbations else None,
        counts={s.label: counts[int(s)] for s in Scale},
        ratios=ratios,
        coordination_events=coord_events,
        realism_score=realism.score,
        enhancement=asdict(enh),
        regulator_flops=sum(f.regulator_flops for f in folds),
        override_steps=sum(f.override_steps for f in folds),
        folds=[asdict(f) for f in folds],
        wall_time=time.perf_counter() - t0,
    )
    if write:
        payload = {"schema_version": CSV_SCHEMA_VERSION, "csv_columns": list(CSV_COLUMNS), **summary.to_dict()}
        (out / "summary.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        (out / "timing.json").write_text(json.dumps({"wall_time": summary.wall_time}) + "\n")
    return summary


# -- ablation ---------------------------------------------------------------

def expand_matrix(text: str) -> list[dict[str, str]]:
    """Matrix file: ``key = a | b | c`` lines; the cells are the cross product."""
    kv = parse_kv(text)
    keys = list(kv)
    if not keys:
        return []
    options = [[v.strip() for v in kv[k].split("|")] for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*options)]


def _run_cell(args) -> dict:
    spec, write = args
    s = run(spec, write=write)
    return s.to_dict()


def ablate(base: ExperimentSpec, matrix: list[dict], replicates: int = 1, workers: int = 1,
           write: bool = True) -> list[dict]:
    """Run every cell of ``matrix`` for ``replicates`` seeds and tabulate the results."""
    if not matrix:
        raise MSTHError("empty-matrix", "ablation matrix has no cells")
    out_root = resolve_output(base.output_dir)
    jobs, meta = [], []
    for ci, overrides in enumerate(matrix):
        cell = apply_overrides(base, overrides)
        for r in range(replicates):
            spec = replace(cell, seed=cell.seed + r, data_seed=cell.data_seed + r,
                           output_dir=str(out_root / f"cell{ci}" / f"rep{r}"))
            jobs.append((spec, write))
            meta.append((ci, r))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]

    rows = []
    for ci, overrides in enumerate(matrix):
        cell_runs = [res for (c, _), res in zip(meta, results) if c == ci]
        vals = [r["final_val_mean"] for r in cell_runs]
        rec = [r["recovered_fraction"] for r in cell_runs if r["recovered_fraction"] is not None]
        to_rec = [r["steps_to_recover"] for r in cell_runs if r["steps_to_recover"] is not None]
        rows.append({
            "cell": ci,
            "overrides": dict(overrides),
            "runs": len(cell_runs),
            "failures": sum(r["failures"] > 0 for r in cell_runs),
            "final_val_mean": _mean_std(vals)[0],
            "final_val_std": _mean_std(vals)[1],
            "recovered_fraction": float(np.mean(rec)) if rec else None,
            "steps_to_recover_mean": float(np.mean(to_rec)) if to_rec else None,
            "regulator_flops_mean": float(np.mean([r["regulator_flops"] for r in cell_runs])),
            "regulator_flops": [r["regulator_flops"] for r in cell_runs],
            "override_runs": sum(r["override_steps"] > 0 for r in cell_runs),
            "realism_mean": float(np.mean([r["realism_score"] for r in cell_runs])),
        })
    if write:
        write_table(rows, out_root)
    return rows


TABLE_COLUMNS = (
    "cell", "overrides", "runs", "failures", "final_val_mean", "final_val_std", "recovered_fraction",
    "steps_to_recover_mean", "regulator_flops_mean", "override_runs", "realism_mean",
)


def write_table(rows: list[dict], out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in rows:
        overrides = r["overrides"]
        if isinstance(overrides, dict):
            overrides = ";".join(f"{k}={v}" for k, v in overrides.items())
        w.writerow([str(r["cell"]), overrides, *("" if r.get(c) is None else _fmt(r[c]) for c in TABLE_COLUMNS[2:])])
    (out_dir / "ablation.csv").write_text(buf.getvalue())


def report(in_dir) -> list[dict]:
    """Collect every ``summary.json`` under ``in_dir`` into one comparison table."""
    in_dir = Path(in_dir)
    paths = sorted(in_dir.rglob("summary.json"))
    if not paths:
        raise MSTHError("empty-report", f"no summary.json under {in_dir}")
    rows = []
    for p in paths:
        s = json.loads(p.read_text())
        rows.append({
            "cell": str(p.parent.relative_to(in_dir)) or ".",
            "overrides": s["name"],
            "runs": len(s["folds"]),
            "failures": s["failures"],
            "final_val_mean": s["final_val_mean"],
            "final_val_std": s["final_val_std"],
            "recovered_fraction": s["recovered_fraction"],
            "steps_to_recover_mean": s["steps_to_recover"],
            "regulator_flops_mean": float(s["regulator_flops"]),
            "override_runs": int(s["override_steps"] > 0),
            "realism_mean": s["realism_score"],
        })
    write_table(rows, in_dir / "report")
    return rows
