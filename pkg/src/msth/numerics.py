"""Small float64 kernel shared by the regulators, the network and the health monitor.

Vectors and matrices are plain numpy arrays. The helpers here validate shape
and finiteness at the boundary so the regulators can assume clean inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class MSTHError(ValueError):
    """Raised for contract violations. ``code`` is a short stable identifier."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


def as_vec(v, *, allow_empty: bool = False) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise MSTHError("shape-mismatch", f"expected a vector, got shape {arr.shape}")
    if arr.size == 0 and not allow_empty:
        raise MSTHError("empty-input")
    if not np.all(np.isfinite(arr)):
        raise MSTHError("non-finite", "vector contains NaN or Inf")
    return arr


def as_mat(w) -> np.ndarray:
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MSTHError("shape-mismatch", f"expected a non-empty matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MSTHError("non-finite", "matrix contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class StatSummary:
    mean: float
    var: float
    std: float
    max_abs: float
    mean_abs: float


def stats(v) -> StatSummary:
    """Population statistics (variance divides by n)."""
    arr = as_vec(v)
    n = arr.size
    mean = float(np.sum(arr)) / n
    dev = arr - mean
    var = float(np.sum(dev * dev)) / n
    absval = np.abs(arr)
    return StatSummary(
        mean=mean,
        var=var,
        std=math.sqrt(var),
        max_abs=float(np.max(absval)),
        mean_abs=float(np.sum(absval)) / n,
    )


def sigmoid(x):
    """Logistic function, overflow-free for any finite input.

    Accepts a scalar or an array; returns the same kind.
    """
    x = np.asarray(x, dtype=np.float64)
    # exp of a non-positive argument never overflows
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return float(out) if out.ndim == 0 else out


def frobenius_norm(w) -> float:
    arr = as_mat(w)
    return math.sqrt(float(np.sum(arr * arr)))


def pop_std(x) -> float:
    """Population standard deviation over every element of ``x``."""
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size == 0:
        raise MSTHError("empty-input")
    mean = float(np.sum(arr)) / arr.size
    dev = arr - mean
    return math.sqrt(float(np.sum(dev * dev)) / arr.size)


def clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def all_finite(*arrays) -> bool:
    return all(bool(np.all(np.isfinite(a))) for a in arrays)
