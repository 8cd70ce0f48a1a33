"""Smoothing kernels on the sensitive attribute and the RBF kernel on
representation space.

Smoothing kernels follow the convention ``K(s, s') = k((s - s') / gamma)``
where ``k`` is a symmetric probability density. The normalizing ``1/gamma``
factor is dropped because every consumer normalizes the weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "KernelFamily",
    "SmoothingKernelSpec",
    "MmdKernelSpec",
    "WeightMatrix",
    "base_kernel",
    "smoothing_kernel_eval",
    "smoothing_kernel_matrix",
    "mmd_kernel_eval",
    "mmd_gram_matrix",
    "centered_weight_matrix",
    "eo_centered_weight_matrix",
    "InsufficientPositivesError",
]

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class InsufficientPositivesError(ValueError):
    """Raised when an equal-opportunity quantity needs at least two positives."""


class KernelFamily(str, Enum):
    RBF = "rbf"
    TRIANGULAR = "triangular"
    EPANECHNIKOV = "epanechnikov"


@dataclass(frozen=True)
class SmoothingKernelSpec:
    family: KernelFamily = KernelFamily.RBF
    bandwidth: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True)
class MmdKernelSpec:
    """RBF kernel ``exp(-|z - z'|^2 / (2 sigma^2))``."""

    sigma: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class WeightMatrix:
    entries: np.ndarray
    kind: str  # "DP" or "EO"

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def base_kernel(family: KernelFamily | str, u) -> np.ndarray:
    """Unit-bandwidth density ``k(u)`` for the given family."""
    family = KernelFamily(family)
    u = np.asarray(u, dtype=np.float64)
    if family is KernelFamily.RBF:
        return np.exp(-0.5 * u * u) * _INV_SQRT_2PI
    if family is KernelFamily.TRIANGULAR:
        return np.maximum(0.0, 1.0 - np.abs(u))
    # Epanechnikov, written as max(0, .) so the support boundary is exact.
    return 0.75 * np.maximum(0.0, 1.0 - u * u)


def smoothing_kernel_eval(spec: SmoothingKernelSpec, s: float, s_prime: float) -> float:
    if not (np.isfinite(s) and np.isfinite(s_prime)):
        raise ValueError("smoothing kernel arguments must be finite")
    return float(base_kernel(spec.family, (s - s_prime) / spec.bandwidth))


def smoothing_kernel_matrix(spec: SmoothingKernelSpec, S) -> np.ndarray:
    """All pairwise ``K(S_i, S_j)`` as an n x n array."""
    S = _as_vector(S, "S")
    return base_kernel(spec.family, (S[:, None] - S[None, :]) / spec.bandwidth)


def mmd_kernel_eval(spec: MmdKernelSpec, z, z_prime) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    z_prime = np.atleast_1d(np.asarray(z_prime, dtype=np.float64))
    if z.shape != z_prime.shape:
        raise ValueError(f"dimension mismatch: {z.shape} vs {z_prime.shape}")
    d2 = float(np.sum((z - z_prime) ** 2))
    return float(np.exp(-d2 / (2.0 * spec.sigma**2)))


def squared_distances(Z: np.ndarray) -> np.ndarray:
    sq = np.sum(Z * Z, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def mmd_gram_matrix(spec: MmdKernelSpec, Z) -> np.ndarray:
    Z = as_matrix(Z, "Z")
    if Z.shape[0] < 1:
        raise ValueError("Z must have at least one row")
    # Direct differences keep entries bit-identical to the scalar evaluation
    # for small inputs; the expanded form is used once memory gets large.
    if Z.shape[0] * Z.shape[0] * Z.shape[1] <= 100_000:
        diff = Z[:, None, :] - Z[None, :, :]
        d2 = np.sum(diff * diff, axis=-1)
    else:
        d2 = squared_distances(Z)
    return np.exp(-d2 / (2.0 * spec.sigma**2))


def centered_weight_matrix(spec: SmoothingKernelSpec, S) -> WeightMatrix:
    """Leave-one-out smoothing weights minus the uniform weight ``1/(n-1)``.

    Row ``i`` holds ``w(j; i) - 1/(n-1)`` for ``j != i`` and 0 on the
    diagonal. A row with zero kernel mass falls back to uniform weights and
    therefore comes out identically zero.
    """
    S = _as_vector(S, "S")
    n = S.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    K = smoothing_kernel_matrix(spec, S)
    np.fill_diagonal(K, 0.0)
    A = _normalize_rows(K, np.ones(n, dtype=bool)) - 1.0 / (n - 1)
    np.fill_diagonal(A, 0.0)
    return WeightMatrix(A, "DP")


def eo_centered_weight_matrix(spec: SmoothingKernelSpec, S, Y) -> WeightMatrix:
    """Centered weights restricted to the positive class (``Y == 1``).

    Columns of non-positive samples are zero. Rows of positive anchors sum
    to zero; rows of negative anchors are never used by the estimators.
    """
    S = _as_vector(S, "S")
    pos = _positive_mask(Y, S.shape[0])
    n1 = int(pos.sum())
    if n1 < 2:
        raise InsufficientPositivesError(f"need at least two positives, got {n1}")
    K = smoothing_kernel_matrix(spec, S)
    np.fill_diagonal(K, 0.0)
    K[:, ~pos] = 0.0
    A = (_normalize_rows(K, pos) - 1.0 / (n1 - 1)) * pos[None, :]
    np.fill_diagonal(A, 0.0)
    return WeightMatrix(A, "EO")


def _normalize_rows(K: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Row-normalize ``K``; zero-mass rows get uniform weight over ``support``
    (excluding the diagonal)."""
    mass = K.sum(axis=1)
    degenerate = mass <= 0.0
    W = np.empty_like(K)
    ok = ~degenerate
    W[ok] = K[ok] / mass[ok, None]
    if degenerate.any():
        for i in np.flatnonzero(degenerate):
            row = support.astype(np.float64)
            row[i] = 0.0
            total = row.sum()
            W[i] = row / total if total > 0 else 0.0
    return W


def _positive_mask(Y, n: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64).reshape(-1)
    if Y.shape[0] != n:
        raise ValueError(f"Y has {Y.shape[0]} entries, expected {n}")
    return Y == 1.0


def _as_vector(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def as_matrix(Z, name: str = "Z") -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise ValueError(f"{name} contains non-finite values")
    return Z


as_vector = _as_vector
