"""Two-layer selu encoder with a linear head, hand-written backprop and AdamW."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SELU_ALPHA",
    "SELU_SCALE",
    "selu",
    "selu_grad",
    "Network",
    "ForwardCache",
    "init_network",
    "forward",
    "backward",
    "Adam",
    "NonFiniteError",
]

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805


class NonFiniteError(FloatingPointError):
    pass


def selu(x: np.ndarray) -> np.ndarray:
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_grad(x: np.ndarray) -> np.ndarray:
    return SELU_SCALE * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


@dataclass
class Network:
    """Weights are stored ``(fan_in, fan_out)`` so a layer is ``x @ W + b``."""

    encoder: list[tuple[np.ndarray, np.ndarray]]
    head: tuple[np.ndarray, np.ndarray]

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.encoder[0][0].shape[0],) + tuple(W.shape[1] for W, _ in self.encoder)

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in self.encoder:
            out += [W, b]
        return out + list(self.head)

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "Network":
        return Network([(W.copy(), b.copy()) for W, b in self.encoder], (self.head[0].copy(), self.head[1].copy()))

    def to_dict(self) -> dict:
        def layer(W, b):
            return [int(W.shape[0]), int(W.shape[1]), W.ravel().tolist(), b.tolist()]

        return {
            "dims": list(self.dims),
            "activation": "selu",
            "encoder": [layer(W, b) for W, b in self.encoder],
            "head": layer(*self.head),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        if d.get("activation", "selu") != "selu":
            raise ValueError(f"unsupported activation {d['activation']!r}")

        def layer(spec):
            rows, cols, values, bias = spec
            W = np.asarray(values, dtype=np.float64).reshape(rows, cols)
            return W, np.asarray(bias, dtype=np.float64).reshape(cols)

        return cls([layer(s) for s in d["encoder"]], layer(d["head"]))


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    Z: np.ndarray | None = None


def init_network(dims, seed: int, out_dim: int = 1) -> Network:
    """LeCun-normal weights (variance ``1/fan_in``), zero biases.

    ``dims = (d, hidden, ..., m)`` lists the encoder widths; the head maps
    ``m`` to ``out_dim``.
    """
    dims = [int(x) for x in dims]
    if len(dims) < 2 or min(dims) < 1 or out_dim < 1:
        raise ValueError(f"invalid network dims {dims}")
    rng = np.random.Generator(np.random.Philox(seed))
    encoder = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        encoder.append((rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in), np.zeros(fan_out)))
    head = (rng.standard_normal((dims[-1], out_dim)) / np.sqrt(dims[-1]), np.zeros(out_dim))
    return Network(encoder, head)


def forward(net: Network, X) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Return representation ``Z``, raw head output and the backward cache."""
    h = np.asarray(X, dtype=np.float64)
    if h.ndim == 1:
        h = h[None, :]
    if not np.all(np.isfinite(h)):
        raise NonFiniteError("input X contains non-finite values")
    cache = ForwardCache()
    for k, (W, b) in enumerate(net.encoder):
        cache.inputs.append(h)
        with np.errstate(over="ignore", invalid="ignore"):  # reported below by layer
            pre = h @ W + b
            h = selu(pre)
        cache.pre.append(pre)
        if not np.all(np.isfinite(h)):
            raise NonFiniteError(f"non-finite activations in encoder layer {k}")
    cache.Z = h
    out = h @ net.head[0] + net.head[1]
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("non-finite values in prediction head")
    return h, out[:, 0] if out.shape[1] == 1 else out, cache


def backward(net: Network, cache: ForwardCache, d_out, d_Z=None) -> list[np.ndarray]:
    """Gradients in the order of :attr:`Network.params`.

    ``d_out`` is the upstream gradient at the head output and ``d_Z`` an
    extra upstream gradient at the representation (the fairness penalty).
    """
    Z = cache.Z
    Wh, _ = net.head
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.ndim == 1:
        d_out = d_out[:, None]
    if d_out.shape != (Z.shape[0], Wh.shape[1]):
        raise ValueError(f"d_out has shape {d_out.shape}, expected {(Z.shape[0], Wh.shape[1])}")
    head_grads = [Z.T @ d_out, d_out.sum(axis=0)]
    g = d_out @ Wh.T
    if d_Z is not None:
        d_Z = np.asarray(d_Z, dtype=np.float64)
        if d_Z.shape != Z.shape:
            raise ValueError(f"d_Z has shape {d_Z.shape}, expected {Z.shape}")
        g = g + d_Z

    enc_grads = []
    for k in range(len(net.encoder) - 1, -1, -1):
        W, _ = net.encoder[k]
        d_pre = g * selu_grad(cache.pre[k])
        enc_grads = [cache.inputs[k].T @ d_pre, d_pre.sum(axis=0)] + enc_grads
        g = d_pre @ W.T
    return enc_grads + head_grads


class Adam:
    """Bias-corrected Adam with decoupled weight decay, updating in place."""

    def __init__(self, params, lr: float = 1e-3, weight_decay: float = 0.01,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.step_count = 0

    def step(self, params, grads) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        decay = 1.0 - self.lr * self.weight_decay
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p *= decay
