"""Tabular data: CSV ingestion, min-max scaling and train/test splitting.

CSV schema: a header row with feature columns ``x0 .. x{d-1}``, the
sensitive attribute ``s`` and an optional target ``y``. Other columns are
rejected so that a typo never silently drops a feature.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "SampleBatch",
    "ScalingParams",
    "CsvParseError",
    "load_csv",
    "write_csv",
    "minmax_scale",
    "apply_scaling",
    "split",
    "make_biased_classification",
]

_FEATURE = re.compile(r"^x(\d+)$")


class CsvParseError(ValueError):
    pass


@dataclass(frozen=True)
class SampleBatch:
    X: np.ndarray
    S: np.ndarray
    Y: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        S = np.asarray(self.S, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "S", S)
        if X.shape[0] != S.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but S has {S.shape[0]}")
        if self.Y is not None:
            Y = np.asarray(self.Y, dtype=np.float64).reshape(-1)
            if Y.shape[0] != S.shape[0]:
                raise ValueError(f"Y has {Y.shape[0]} rows but S has {S.shape[0]}")
            object.__setattr__(self, "Y", Y)
        for name in ("X", "S", "Y"):
            arr = getattr(self, name)
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def take(self, idx) -> "SampleBatch":
        return SampleBatch(self.X[idx], self.S[idx], None if self.Y is None else self.Y[idx])


@dataclass(frozen=True)
class ScalingParams:
    x_min: np.ndarray
    x_max: np.ndarray
    s_min: float
    s_max: float

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min.tolist(),
            "x_max": self.x_max.tolist(),
            "s_min": self.s_min,
            "s_max": self.s_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingParams":
        return cls(
            np.asarray(d["x_min"], dtype=np.float64),
            np.asarray(d["x_max"], dtype=np.float64),
            float(d["s_min"]),
            float(d["s_max"]),
        )


def load_csv(path) -> SampleBatch:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvParseError(f"{path}: empty file, header row expected") from None
        features = {}
        s_col = y_col = None
        for c, name in enumerate(header):
            match = _FEATURE.match(name)
            if match:
                features[int(match.group(1))] = c
            elif name == "s":
                s_col = c
            elif name == "y":
                y_col = c
            else:
                raise CsvParseError(f"{path}: unexpected column {name!r} (column {c + 1})")
        if s_col is None:
            raise CsvParseError(f"{path}: missing sensitive-attribute column 's'")
        if sorted(features) != list(range(len(features))):
            raise CsvParseError(f"{path}: feature columns must be x0..x{len(features) - 1}")
        x_cols = [features[k] for k in range(len(features))]

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvParseError(
                    f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}"
                )
            values = []
            for c, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise CsvParseError(
                        f"{path}: row {lineno}, column {header[c]!r}: non-numeric cell {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise CsvParseError(
                        f"{path}: row {lineno}, column {header[c]!r}: non-finite value {cell!r}"
                    )
                values.append(v)
            rows.append(values)

    table = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    X = table[:, x_cols] if x_cols else np.zeros((len(rows), 0))
    Y = table[:, y_col] if y_col is not None else None
    return SampleBatch(X, table[:, s_col], Y)


def write_csv(batch: SampleBatch, path) -> None:
    """Write ``batch`` with 17 significant digits so that reloading is exact."""
    header = [f"x{k}" for k in range(batch.d)] + ["s"]
    if batch.Y is not None:
        header.append("y")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(batch.n):
            row = list(batch.X[i]) + [batch.S[i]]
            if batch.Y is not None:
                row.append(batch.Y[i])
            writer.writerow(f"{v:.17g}" for v in row)


def minmax_scale(batch: SampleBatch) -> tuple[SampleBatch, ScalingParams]:
    params = ScalingParams(
        batch.X.min(axis=0) if batch.n else np.zeros(batch.d),
        batch.X.max(axis=0) if batch.n else np.ones(batch.d),
        float(batch.S.min()),
        float(batch.S.max()),
    )
    return apply_scaling(batch, params), params


def _scale(values: np.ndarray, lo, hi, name: str) -> np.ndarray:
    span = np.asarray(hi - lo, dtype=np.float64)
    constant = span <= 0
    if np.any(constant):
        logger.warning("constant column(s) %s mapped to zero", name)
    safe = np.where(constant, 1.0, span)
    return np.where(constant, 0.0, (values - lo) / safe)


def apply_scaling(batch: SampleBatch, params: ScalingParams) -> SampleBatch:
    X = _scale(batch.X, params.x_min, params.x_max, "of X")
    S = _scale(batch.S, params.s_min, params.s_max, "s")
    return replace(batch, X=X, S=S)


def split(batch: SampleBatch, fractions=(0.8, 0.2), seed: int = 0):
    """Shuffle with ``seed`` and cut into a train and a test part.

    Rows keep their values; fit scaling on the train part afterwards.
    """
    train_frac, test_frac = fractions
    if train_frac <= 0 or test_frac <= 0 or abs(train_frac + test_frac - 1.0) > 1e-12:
        raise ValueError(f"fractions must be positive and sum to 1, got {fractions}")
    n_train = int(round(batch.n * train_frac))
    if n_train == 0 or n_train == batch.n:
        raise ValueError(f"split of {batch.n} rows by {fractions} leaves an empty part")
    order = np.random.Generator(np.random.Philox(seed)).permutation(batch.n)
    return batch.take(order[:n_train]), batch.take(order[n_train:])


def make_biased_classification(n: int = 4000, d: int = 5, corr: float = 0.6, seed: int = 0) -> SampleBatch:
    """Synthetic task whose label leans on a feature correlated with ``S``.

    ``S`` and all features are standard normal; ``x0`` has correlation
    ``corr`` with ``S`` and the others are independent of it. The label is
    ``1{x0 + x1 + x2 + 0.5 * noise > 0}``, so a fair model can still use
    ``x1`` and ``x2``.
    """
    if d < 3:
        raise ValueError("need at least three features")
    rng = np.random.Generator(np.random.Philox(seed))
    S = rng.standard_normal(n)
    X = rng.standard_normal((n, d))
    X[:, 0] = corr * S + np.sqrt(1.0 - corr**2) * X[:, 0]
    logit = X[:, 0] + X[:, 1] + X[:, 2] + 0.5 * rng.standard_normal(n)
    return SampleBatch(X, S, (logit > 0).astype(np.float64))
