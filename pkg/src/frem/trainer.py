"""Mini-batch training with a fairness penalty on the representation (FREM)
or on the predictions (Reg-GDP), and evaluation of the trained model."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .data import SampleBatch, split
from .eipm import eipm_proposed, eipm_value_and_gradient
from .kernels import (
    InsufficientPositivesError,
    MmdKernelSpec,
    SmoothingKernelSpec,
    centered_weight_matrix,
    eo_centered_weight_matrix,
)
from .metrics import (
    DEFAULT_EVAL_SPEC,
    FairnessReport,
    average_precision,
    estimate_gdp,
    estimate_geo,
    estimate_mi_knn,
)
from .net import Adam, Network, NonFiniteError, backward, forward, init_network

logger = logging.getLogger(__name__)

__all__ = [
    "Task",
    "Fairness",
    "Regularizer",
    "TrainConfig",
    "TrainHistory",
    "TrainingDivergedError",
    "supervised_loss",
    "reg_gdp_penalty",
    "train_frem",
    "evaluate",
    "select_bandwidth",
    "sigmoid",
]

REG_GDP_FLOOR = 1e-8


class Task(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


class Fairness(str, Enum):
    DP = "dp"
    EO = "eo"


class Regularizer(str, Enum):
    FREM = "frem"
    REG_GDP = "reg-gdp"
    NONE = "none"


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, detail: str):
        super().__init__(f"non-finite loss at epoch {epoch}: {detail}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    lam: float = 0.0
    lr: float = 1e-3
    weight_decay: float = 0.01
    epochs: int = 200
    batch_size: int = 200
    gamma: float = 0.1
    sigma: float = 1.0
    kernel: str = "rbf"
    task: Task = Task.CLASSIFICATION
    fairness: Fairness = Fairness.DP
    regularizer: Regularizer = Regularizer.FREM
    hidden: int = 50
    rep_dim: int = 50
    seed: int = 0

    def __post_init__(self):
        self.task = Task(self.task)
        self.fairness = Fairness(self.fairness)
        self.regularizer = Regularizer(self.regularizer)
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 2:
            raise ValueError("batch size must be at least 2")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")

    @property
    def smoothing_spec(self) -> SmoothingKernelSpec:
        return SmoothingKernelSpec(self.kernel, self.gamma)

    @property
    def mmd_spec(self) -> MmdKernelSpec:
        return MmdKernelSpec(self.sigma)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("task", "fairness", "regularizer"):
            d[key] = getattr(self, key).value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainHistory:
    supervised: list[float] = field(default_factory=list)
    fairness: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    skipped_eo_batches: int = 0

    def __len__(self) -> int:
        return len(self.total)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))


def supervised_loss(out, Y, task) -> tuple[float, np.ndarray]:
    """Mean loss and its gradient with respect to the raw outputs."""
    out = np.asarray(out, dtype=np.float64).reshape(-1)
    Y = np.asarray(Y, dtype=np.float64).reshape(-1)
    if out.shape != Y.shape:
        raise ValueError(f"outputs {out.shape} and labels {Y.shape} disagree")
    n = out.shape[0]
    if Task(task) is Task.CLASSIFICATION:
        if not np.all((Y == 0.0) | (Y == 1.0)):
            raise ValueError("classification labels must be 0 or 1")
        # softplus(x) - y x, stable for large |x|
        loss = np.mean(np.logaddexp(0.0, out) - Y * out)
        return float(loss), (sigmoid(out) - Y) / n
    resid = out - Y
    return float(np.mean(resid * resid)), 2.0 * resid / n


def reg_gdp_penalty(pred, S, spec_S: SmoothingKernelSpec, Y=None) -> tuple[float, np.ndarray]:
    """Smoothed kernel GDP (or GEO when ``Y`` is given) and its gradient.

    ``|r|`` is replaced by ``sqrt(r^2 + 1e-8)``.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    if Y is None:
        A = centered_weight_matrix(spec_S, S).entries
    else:
        Y = np.asarray(Y, dtype=np.float64).reshape(-1)
        A = eo_centered_weight_matrix(spec_S, S, Y).entries[Y == 1.0]
    r = A @ pred
    smooth = np.sqrt(r * r + REG_GDP_FLOOR)
    value = float(np.mean(smooth))
    grad = A.T @ (r / smooth) / A.shape[0]
    return value, grad


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.shape[0], batch_size):
        idx = order[start:start + batch_size]
        if idx.shape[0] >= 2:
            yield idx


def _fairness_step(config: TrainConfig, out, Z, S, Y, history: TrainHistory):
    """Return (penalty value, extra d_out, d_Z) for one batch."""
    eo = config.fairness is Fairness.EO
    if eo and (Y is None or int(np.sum(Y == 1.0)) < 2):
        history.skipped_eo_batches += 1
        return 0.0, None, None
    labels = Y if eo else None

    if config.regularizer is Regularizer.FREM:
        kind = "EO" if eo else "DP"
        value, grad = eipm_value_and_gradient(Z, S, config.smoothing_spec, config.mmd_spec, kind, labels)
        return value, None, config.lam * grad

    if config.regularizer is Regularizer.REG_GDP:
        if config.task is Task.CLASSIFICATION:
            p = sigmoid(out)
            value, g = reg_gdp_penalty(p, S, config.smoothing_spec, labels)
            return value, config.lam * g * p * (1.0 - p), None
        value, g = reg_gdp_penalty(out, S, config.smoothing_spec, labels)
        return value, config.lam * g, None

    return 0.0, None, None


def train_frem(data: SampleBatch, config: TrainConfig) -> tuple[Network, TrainHistory]:
    """Train encoder and head jointly on ``supervised + lam * penalty``.

    Every mini-batch builds its own centered weight matrix; there is no
    memory across batches. The last short batch is kept if it has at least
    two rows.
    """
    if data.Y is None:
        raise ValueError("training data needs labels")
    net = init_network((data.d, config.hidden, config.rep_dim), config.seed)
    opt = Adam(net.params, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.Generator(np.random.Philox(config.seed))
    history = TrainHistory()

    for epoch in range(config.epochs):
        order = rng.permutation(data.n)
        sup_sum = fair_sum = total_sum = 0.0
        n_batches = 0
        for idx in _batches(order, config.batch_size):
            X, S, Y = data.X[idx], data.S[idx], data.Y[idx]
            try:
                Z, out, cache = forward(net, X)
            except NonFiniteError as exc:
                raise TrainingDivergedError(epoch, str(exc)) from exc
            sup, d_out = supervised_loss(out, Y, config.task)
            fair, extra_out, d_Z = _fairness_step(config, out, Z, S, Y, history)
            if extra_out is not None:
                d_out = d_out + extra_out
            total = sup + config.lam * fair
            if not np.isfinite(total):
                raise TrainingDivergedError(epoch, f"supervised={sup}, fairness={fair}")
            opt.step(net.params, backward(net, cache, d_out, d_Z))
            sup_sum += sup
            fair_sum += fair
            total_sum += total
            n_batches += 1
        history.supervised.append(sup_sum / n_batches)
        history.fairness.append(fair_sum / n_batches)
        history.total.append(total_sum / n_batches)
        logger.debug("epoch %d: sup=%.5f fair=%.5f", epoch, history.supervised[-1], history.fairness[-1])

    if history.skipped_eo_batches:
        logger.warning("%d batches had fewer than two positives; EO penalty skipped",
                       history.skipped_eo_batches)
    return net, history


def predict(net: Network, X, task) -> tuple[np.ndarray, np.ndarray]:
    """Representation and prediction (probability for classification)."""
    Z, out, _ = forward(net, X)
    return Z, sigmoid(out) if Task(task) is Task.CLASSIFICATION else out


def evaluate(
    net: Network,
    data: SampleBatch,
    config: TrainConfig,
    eval_spec: SmoothingKernelSpec = DEFAULT_EVAL_SPEC,
    mi_k: int = 3,
) -> FairnessReport:
    """Task and fairness metrics of ``net`` on ``data``.

    GDP and GEO use ``eval_spec`` on the predictions; EIPM uses the training
    kernels on the representation.
    """
    Z, out, _ = forward(net, data.X)
    task = Task(config.task)
    pred = sigmoid(out) if task is Task.CLASSIFICATION else out
    report = FairnessReport(
        task=task.value,
        gdp=estimate_gdp(pred, data.S, eval_spec),
        eipm=eipm_proposed(Z, data.S, config.smoothing_spec, config.mmd_spec).value,
        mi_pred_s=estimate_mi_knn(pred, data.S, mi_k),
        mi_z_s=estimate_mi_knn(data.S, Z, mi_k),
    )
    if data.Y is not None:
        Y = data.Y
        if task is Task.CLASSIFICATION:
            report.acc = float(np.mean((out > 0) == (Y == 1.0)))
            report.ap = average_precision(Y, pred)
        else:
            resid = pred - Y
            report.mse = float(np.mean(resid * resid))
            report.mae = float(np.mean(np.abs(resid)))
        if np.all((Y == 0.0) | (Y == 1.0)):
            try:
                report.geo = estimate_geo(pred, data.S, Y, eval_spec)
            except InsufficientPositivesError:
                report.geo = None
    return report


def select_bandwidth(
    data: SampleBatch,
    config: TrainConfig,
    grid=(0.01, 0.05, 0.1, 0.2),
    val_fraction: float = 0.2,
    gdp_tolerance: float = 0.01,
    eval_spec: SmoothingKernelSpec = DEFAULT_EVAL_SPEC,
) -> tuple[float, list[dict]]:
    """Pick ``gamma`` on a held-out part of ``data``.

    Among the runs whose validation GDP is within ``gdp_tolerance`` of the
    smallest one, the best task metric (accuracy, or lowest MSE) wins.
    """
    train, val = split(data, (1.0 - val_fraction, val_fraction), config.seed)
    rows = []
    for gamma in grid:
        cfg = TrainConfig.from_dict({**config.to_dict(), "gamma": gamma})
        net, _ = train_frem(train, cfg)
        rep = evaluate(net, val, cfg, eval_spec)
        score = rep.acc if cfg.task is Task.CLASSIFICATION else -rep.mse
        rows.append({"gamma": gamma, "gdp": rep.gdp, "score": score})
    best_gdp = min(r["gdp"] for r in rows)
    eligible = [r for r in rows if r["gdp"] <= best_gdp + gdp_tolerance]
    chosen = max(eligible, key=lambda r: r["score"])
    return chosen["gamma"], rows
