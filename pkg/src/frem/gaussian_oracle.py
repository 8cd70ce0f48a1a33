"""Ground-truth EIPM for jointly Gaussian ``(S, Z)`` designs.

With the unit-scale RBF kernel the expected kernel between two Gaussians is
available in closed form, so the MMD between ``P(Z | S = s)`` and ``P(Z)``
is exact for every ``s``; only the outer expectation over ``S`` is done by
Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import SampleBatch

__all__ = [
    "GaussianModel1d",
    "GaussianModelMulti",
    "expected_gaussian_kernel",
    "true_ipm_conditional",
    "true_eipm_monte_carlo",
    "sample_synthetic_1d",
    "sample_synthetic_multi",
    "make_rng",
]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; streams are reproducible across platforms."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


@dataclass(frozen=True)
class GaussianModel1d:
    """``(S, X1, X2)`` standard normal with ``Corr(S, X1) = rho``; ``Z = w1 X1 + w2 X2``."""

    rho: float
    w1: float
    w2: float

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if abs(self.w1**2 + self.w2**2 - 1.0) > 1e-12:
            raise ValueError("encoder weights must have unit norm")

    @classmethod
    def from_w1(cls, rho: float, w1: float) -> "GaussianModel1d":
        return cls(rho, w1, math.sqrt(max(0.0, 1.0 - w1 * w1)))

    @property
    def covariance(self) -> np.ndarray:
        r = self.rho
        return np.array([[1.0, r, 0.0], [r, 1.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class GaussianModelMulti:
    """``S ~ N(0, 1)``, ``Z ~ N(0, I/m)`` with ``Cov(S, Z_k) = rho / sqrt(m)``."""

    m: int
    rho: float

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if not 0.0 <= self.rho < 1.0 / math.sqrt(self.m):
            raise ValueError(
                f"rho={self.rho} outside [0, 1/sqrt(m)); covariance not positive definite"
            )

    @property
    def covariance(self) -> np.ndarray:
        m = self.m
        C = np.zeros((m + 1, m + 1))
        C[0, 0] = 1.0
        C[0, 1:] = C[1:, 0] = self.rho / math.sqrt(m)
        C[1:, 1:] = np.eye(m) / m
        return C


def expected_gaussian_kernel(mu1, cov1, mu2, cov2) -> float:
    """``E k(U, T)`` for ``U ~ N(mu1, cov1)``, ``T ~ N(mu2, cov2)`` and the
    unit-scale RBF kernel."""
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=np.float64))
    d = mu1.shape[0]
    cov1 = np.asarray(cov1, dtype=np.float64).reshape(d, d)
    cov2 = np.asarray(cov2, dtype=np.float64).reshape(d, d)
    if mu2.shape[0] != d:
        raise ValueError("mean dimensions disagree")
    for name, c in (("cov1", cov1), ("cov2", cov2)):
        if not np.allclose(c, c.T, atol=1e-12):
            raise ValueError(f"{name} is not symmetric")
        if np.linalg.eigvalsh(c).min() < -1e-12:
            raise ValueError(f"{name} is not positive semi-definite")
    M = cov1 + cov2 + np.eye(d)
    diff = mu1 - mu2
    _, logdet = np.linalg.slogdet(M)
    quad = float(diff @ np.linalg.solve(M, diff))
    return math.exp(-0.5 * logdet - 0.5 * quad)


def true_ipm_conditional(model, s):
    """Exact MMD between ``P(Z | S = s)`` and ``P(Z)``; vectorized over ``s``."""
    s = np.asarray(s, dtype=np.float64)
    if isinstance(model, GaussianModel1d):
        a = (model.w1 * model.rho) ** 2
        k_marg = 1.0 / math.sqrt(3.0)
        k_cond = 1.0 / math.sqrt(3.0 - 2.0 * a)
        k_cross = np.exp(-a * s * s / (2.0 * (3.0 - a))) / math.sqrt(3.0 - a)
    elif isinstance(model, GaussianModelMulti):
        m, r2 = model.m, model.rho**2
        base = 1.0 + 2.0 / m
        k_marg = base ** (-m / 2.0)
        k_cond = 1.0 / math.sqrt(base ** (m - 1) * (base - 2.0 * r2))
        k_cross = np.exp(-0.5 * r2 * s * s * m / (m + 2.0 - m * r2)) / math.sqrt(
            base ** (m - 1) * (base - r2)
        )
    else:
        raise TypeError(f"unsupported model {type(model).__name__}")
    out = np.sqrt(np.maximum(k_marg + k_cond - 2.0 * k_cross, 0.0))
    if model.rho == 0.0:
        out = np.zeros_like(out)
    return float(out) if out.ndim == 0 else out


def true_eipm_monte_carlo(model, N: int = 100_000, seed: int = 0) -> float:
    if N < 1:
        raise ValueError("N must be at least 1")
    if model.rho == 0.0:
        return 0.0
    s = make_rng(seed).standard_normal(N)
    return float(np.mean(true_ipm_conditional(model, s)))


def _sample_gaussian(cov: np.ndarray, n: int, seed: int) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    return make_rng(seed).standard_normal((n, cov.shape[0])) @ L.T


def sample_synthetic_1d(model: GaussianModel1d, n: int, seed: int) -> SampleBatch:
    """Draw ``(X1, X2)`` and ``S``. The representation is ``X @ (w1, w2)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    draw = _sample_gaussian(model.covariance, n, seed)
    return SampleBatch(X=draw[:, 1:], S=draw[:, 0])


def sample_synthetic_multi(model: GaussianModelMulti, n: int, seed: int) -> SampleBatch:
    """Draw ``(S, Z)``; ``Z`` is stored directly as the feature matrix."""
    if n < 1:
        raise ValueError("n must be at least 1")
    draw = _sample_gaussian(model.covariance, n, seed)
    return SampleBatch(X=draw[:, 1:], S=draw[:, 0])
