"""Synthetic datasets, delimited-text loading and train-split standardization."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import MSTHError


def _class_sizes(n: int) -> tuple[int, int]:
    return n - n // 2, n // 2


def generate_synthetic(kind: str, n: int, noise: float = 0.0, seed: int = 2023, *,
                       n_features: int = 2, separation: float = 4.0) -> tuple[np.ndarray, np.ndarray]:
    """Balanced two-class toy problems.

    ``blobs``: unit-variance Gaussian clusters whose centres sit ``separation``
    standard deviations apart along the first axis; ``noise`` is the
    probability of flipping a label. ``spirals``: two interleaved planar
    spirals; ``noise`` is the std of the angular jitter in radians.
    """
    if n < 10:
        raise MSTHError("invalid-config", "need n >= 10 samples")
    rng = np.random.default_rng(seed)
    n0, n1 = _class_sizes(n)
    if kind == "blobs":
        if not 2 <= n_features <= 16:
            raise MSTHError("invalid-config", "blobs support 2..16 features")
        centre = np.zeros(n_features)
        centre[0] = separation / 2.0
        X = np.vstack([
            rng.normal(size=(n0, n_features)) - centre,
            rng.normal(size=(n1, n_features)) + centre,
        ])
        y = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
        if noise > 0:
            flip = rng.random(n) < noise
            y = np.where(flip, 1 - y, y)
    elif kind == "spirals":
        parts, labels = [], []
        for cls, m in ((0, n0), (1, n1)):
            t = np.sqrt(rng.uniform(0.0, 1.0, m)) * 3.0 * np.pi
            angle = t + cls * np.pi + rng.normal(0.0, noise, m) if noise > 0 else t + cls * np.pi
            radius = t / (3.0 * np.pi) * 5.0
            parts.append(np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]))
            labels.append(np.full(m, cls, dtype=np.int64))
        X = np.vstack(parts)
        y = np.concatenate(labels)
    else:
        raise MSTHError("invalid-config", f"unknown synthetic dataset {kind!r}")
    order = rng.permutation(n)
    return X[order], y[order]


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise MSTHError("empty-dataset")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        # roundoff leaves std ~ eps*|x| on constant columns; treat those as constant
        floor = 1e-12 * np.maximum(1.0, np.max(np.abs(X), axis=0))
        return cls(mean, np.where(std <= floor, 1.0, std))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


class DatasetError(MSTHError):
    pass


def read_tabular(path, label_column: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Raw numeric features, integer labels and the sorted class names."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError("unreadable-dataset", f"{path}: {exc}") from exc
    delimiter = "\t" if path.suffix in (".tsv", ".tab") else ","
    first = text.splitlines()[0] if text.strip() else ""
    if delimiter == "," and "," not in first and any(d in first for d in ";\t"):
        delimiter = ";" if ";" in first else "\t"
    rows = [r for r in csv.reader(text.splitlines(), delimiter=delimiter) if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError("empty-dataset", f"{path} has no header")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise DatasetError("missing-label-column", f"{label_column!r} not in header {header}")
    body = rows[1:]
    if not body:
        raise DatasetError("empty-dataset", f"{path} has a header but no rows")
    li = header.index(label_column)
    feat_cols = [i for i in range(len(header)) if i != li]
    X = np.empty((len(body), len(feat_cols)))
    raw_labels = []
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DatasetError("bad-row", f"line {r}: expected {len(header)} cells, got {len(row)}")
        for j, c in enumerate(feat_cols):
            cell = row[c].strip()
            try:
                X[r - 2, j] = float(cell)
            except ValueError:
                raise DatasetError("non-numeric", f"line {r}, column {header[c]!r}: {cell!r}") from None
        raw_labels.append(row[li].strip())
    if not np.all(np.isfinite(X)):
        raise DatasetError("non-numeric", "non-finite feature value")
    classes = sorted(set(raw_labels), key=_label_key)
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[v] for v in raw_labels], dtype=np.int64)
    return X, y, classes


def _label_key(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def load_tabular(path, label_column: str, train_idx=None) -> tuple[np.ndarray, np.ndarray, Standardizer]:
    """Load and standardize with statistics of the ``train_idx`` rows only (all rows if omitted)."""
    X, y, _ = read_tabular(path, label_column)
    rows = slice(None) if train_idx is None else np.asarray(train_idx)
    scaler = Standardizer.fit(X[rows])
    return scaler.transform(X), y, scaler
