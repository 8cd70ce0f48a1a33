"""Finite-difference checks of every hand-written gradient."""

from __future__ import annotations

import numpy as np

from .eipm import eipm_value_and_gradient
from .kernels import MmdKernelSpec, SmoothingKernelSpec
from .net import backward, forward, init_network
from .trainer import reg_gdp_penalty, supervised_loss

__all__ = ["central_difference", "relative_error", "run_gradcheck", "TOLERANCE"]

TOLERANCE = 1e-4


def central_difference(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``; ``x`` is perturbed in place
    and restored."""
    grad = np.zeros_like(x)
    flat, g = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f()
        flat[i] = orig - step
        f_minus = f()
        flat[i] = orig
        g[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def _eipm_case(rng, kind: str) -> float:
    n, m = 8, 3
    Z = rng.standard_normal((n, m))
    S = rng.uniform(0, 1, n)
    Y = np.array([1, 1, 0, 1, 0, 1, 1, 0], dtype=float) if kind == "EO" else None
    spec_S, spec_Z = SmoothingKernelSpec("rbf", 0.3), MmdKernelSpec(1.0)
    _, grad = eipm_value_and_gradient(Z, S, spec_S, spec_Z, kind, Y)
    numeric = central_difference(
        lambda: eipm_value_and_gradient(Z, S, spec_S, spec_Z, kind, Y)[0], Z
    )
    return relative_error(grad, numeric)


def _reg_gdp_case(rng) -> float:
    n = 20
    pred = rng.uniform(0, 1, n)
    S = rng.uniform(0, 1, n)
    spec = SmoothingKernelSpec("rbf", 0.2)
    _, grad = reg_gdp_penalty(pred, S, spec)
    numeric = central_difference(lambda: reg_gdp_penalty(pred, S, spec)[0], pred)
    return relative_error(grad, numeric)


def _network_case(rng, seed: int) -> float:
    n, lam = 10, 2.0
    net = init_network((2, 4, 3), seed)
    X = rng.standard_normal((n, 2))
    S = rng.uniform(0, 1, n)
    Y = (rng.uniform(size=n) > 0.5).astype(float)
    spec_S, spec_Z = SmoothingKernelSpec("rbf", 0.3), MmdKernelSpec(1.0)

    def loss():
        Z, out, _ = forward(net, X)
        sup, _ = supervised_loss(out, Y, "classification")
        return sup + lam * eipm_value_and_gradient(Z, S, spec_S, spec_Z)[0]

    Z, out, cache = forward(net, X)
    _, d_out = supervised_loss(out, Y, "classification")
    _, d_Z = eipm_value_and_gradient(Z, S, spec_S, spec_Z)
    grads = backward(net, cache, d_out, lam * d_Z)
    return max(relative_error(g, central_difference(loss, p)) for p, g in zip(net.params, grads))


def run_gradcheck(seed: int = 0, n_seeds: int = 10) -> dict[str, float]:
    """Maximum relative error per component over ``n_seeds`` random instances."""
    worst = {"eipm_gradient_dp": 0.0, "eipm_gradient_eo": 0.0, "reg_gdp_penalty": 0.0,
             "network_backward": 0.0}
    for k in range(n_seeds):
        rng = np.random.Generator(np.random.Philox(seed + k))
        worst["eipm_gradient_dp"] = max(worst["eipm_gradient_dp"], _eipm_case(rng, "DP"))
        worst["eipm_gradient_eo"] = max(worst["eipm_gradient_eo"], _eipm_case(rng, "EO"))
        worst["reg_gdp_penalty"] = max(worst["reg_gdp_penalty"], _reg_gdp_case(rng))
        worst["network_backward"] = max(worst["network_backward"], _network_case(rng, seed + k))
    return worst
