"""Fairness and task metrics used to audit trained models."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from .kernels import (
    SmoothingKernelSpec,
    as_matrix,
    as_vector,
    centered_weight_matrix,
    eo_centered_weight_matrix,
)

__all__ = [
    "FairnessReport",
    "estimate_gdp",
    "estimate_geo",
    "estimate_mi_knn",
    "average_precision",
    "DEFAULT_EVAL_SPEC",
]

DEFAULT_EVAL_SPEC = SmoothingKernelSpec("rbf", 0.1)


@dataclass
class FairnessReport:
    task: str
    gdp: float
    eipm: float
    mi_pred_s: float
    mi_z_s: float
    geo: float | None = None
    acc: float | None = None
    ap: float | None = None
    mse: float | None = None
    mae: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_gdp(pred, S, spec_S: SmoothingKernelSpec = DEFAULT_EVAL_SPEC) -> float:
    """Mean absolute gap between the leave-one-out kernel regression of
    ``pred`` on ``S`` and the leave-one-out mean of ``pred``.

    Row ``i`` of the centered weight matrix applied to ``pred`` is exactly
    that gap for anchor ``i``. Rows sum to zero, so ``pred`` is shifted by
    its first entry first; constant predictions then give exactly 0.
    """
    S = as_vector(S, "S")
    pred = as_vector(pred, "pred")
    if pred.shape != S.shape:
        raise ValueError("pred and S must have the same length")
    A = centered_weight_matrix(spec_S, S).entries
    return float(np.mean(np.abs(A @ (pred - pred[0]))))


def estimate_geo(pred, S, Y, spec_S: SmoothingKernelSpec = DEFAULT_EVAL_SPEC) -> float:
    S = as_vector(S, "S")
    pred = as_vector(pred, "pred")
    Y = np.asarray(Y, dtype=np.float64).reshape(-1)
    if pred.shape != S.shape:
        raise ValueError("pred and S must have the same length")
    A = eo_centered_weight_matrix(spec_S, S, Y).entries
    pos = Y == 1.0
    return float(np.mean(np.abs(A[pos] @ (pred - pred[0]))))


def _data_seed(*arrays: np.ndarray) -> int:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return int.from_bytes(h.digest()[:8], "little")


def _standardize(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    std = x.std(axis=0)
    x = x / np.where(std > 0, std, 1.0)
    scale = np.maximum(1.0, np.mean(np.abs(x), axis=0))
    return x + 1e-10 * scale * rng.uniform(-1.0, 1.0, size=x.shape)


def estimate_mi_knn(u, v, k: int = 3) -> float:
    """Kraskov-Stoegbauer-Grassberger mutual information (first variant), in nats.

    Both variables are scaled to unit variance and jittered by ``1e-10`` to
    break ties; the jitter is seeded from the data so results are repeatable.
    ``v`` may be a matrix, in which case its rows are treated jointly.
    """
    u = as_matrix(u, "u")
    v = as_matrix(v, "v")
    n = u.shape[0]
    if v.shape[0] != n:
        raise ValueError("u and v must have the same number of samples")
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    rng = np.random.Generator(np.random.Philox(_data_seed(u, v)))
    u = _standardize(u, rng)
    v = _standardize(v, rng)

    joint = np.hstack([u, v])
    dist, _ = cKDTree(joint).query(joint, k=k + 1, p=np.inf)
    radius = np.nextafter(dist[:, -1], 0)
    n_u = cKDTree(u).query_ball_point(u, radius, p=np.inf, return_length=True) - 1
    n_v = cKDTree(v).query_ball_point(v, radius, p=np.inf, return_length=True) - 1
    mi = digamma(n) + digamma(k) - np.mean(digamma(n_u + 1)) - np.mean(digamma(n_v + 1))
    return float(max(0.0, mi))


def average_precision(y_true, score) -> float:
    """Area under the step-interpolated precision-recall curve."""
    y_true = np.asarray(y_true, dtype=np.float64).reshape(-1)
    score = np.asarray(score, dtype=np.float64).reshape(-1)
    n_pos = y_true.sum()
    if n_pos == 0:
        return 0.0
    order = np.argsort(-score, kind="mergesort")
    s, y = score[order], y_true[order]
    # thresholds at the last index of each run of tied scores
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
