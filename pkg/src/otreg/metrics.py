"""Evaluation metrics pooled over all entries of all samples.

``rmse`` is the square root of the pooled mean squared error. ``rse`` is
the pooled squared error divided by the pooled squared deviation of the
truths from their mean, so predicting the pooled mean everywhere scores
exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError

RSE_DEFINITION = (
    "RSE = sum((pred - truth)^2) / sum((truth - mean(truth))^2), "
    "pooled over all entries of all samples"
)


@dataclass(frozen=True)
class MetricSummary:
    rmse: float
    rse: float  # NaN when the denominator is zero
    rse_defined: bool
    n_samples: int
    per_sample_rmse: np.ndarray


def _stack(preds, truths) -> tuple[np.ndarray, np.ndarray]:
    preds = [np.asarray(p, dtype=np.float64) for p in preds]
    truths = [np.asarray(t, dtype=np.float64) for t in truths]
    if len(preds) != len(truths):
        raise DimensionError("prediction and truth counts differ")
    if not preds:
        raise DimensionError("cannot compute metrics on empty input")
    for p, t in zip(preds, truths):
        if p.shape != t.shape:
            raise DimensionError(f"shape mismatch: {p.shape} vs {t.shape}")
    return np.stack(preds), np.stack(truths)


def rmse(preds, truths) -> float:
    """Root of the mean squared error over all entries of all samples."""
    p, t = _stack(preds, truths)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def rse(preds, truths) -> float:
    """Pooled relative squared error; NaN when the truths are constant."""
    p, t = _stack(preds, truths)
    denominator = float(np.sum((t - t.mean()) ** 2))
    if denominator == 0.0:
        return float("nan")
    return float(np.sum((p - t) ** 2) / denominator)


def summarize(preds, truths) -> MetricSummary:
    p, t = _stack(preds, truths)
    per_sample = np.sqrt(((p - t) ** 2).mean(axis=tuple(range(1, p.ndim))))
    rse_value = rse(preds, truths)
    return MetricSummary(
        rmse=rmse(preds, truths),
        rse=rse_value,
        rse_defined=not np.isnan(rse_value),
        n_samples=len(preds),
        per_sample_rmse=per_sample,
    )
