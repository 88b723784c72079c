"""Exact small-model metrics and the evaluation report record."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rbm import (
    MAX_ENUM_UNITS,
    RbmParams,
    log_unnormalized_marginal,
    state_index,
    visible_distribution,
)


@dataclass
class EvalReport:
    avg_log_prob: float
    log_z: float
    log_z_stderr: float = 0.0
    kl: float = None
    accuracy: float = None
    trajectory: list = field(default_factory=list)

    def __post_init__(self):
        if self.log_z_stderr < 0:
            raise ValueError("stderr must be >= 0")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")


def avg_log_prob(params: RbmParams, data, log_z: float) -> float:
    """Mean of log P(v) over ``data`` given a log partition function."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.shape[0] == 0:
        raise ValueError("dataset is empty")
    return float(np.mean(log_unnormalized_marginal(params, data)) - log_z)


def model_visible_distribution(params: RbmParams, max_units: int = MAX_ENUM_UNITS) -> np.ndarray:
    """P(v) over all 2^M visible states (state k is the binary expansion of k)."""
    return visible_distribution(params, max_units)


def empirical_distribution(data, n_visible=None) -> np.ndarray:
    """Probability table of the rows of ``data`` over all 2^M visible states."""
    data = np.asarray(data)
    m = data.shape[1] if n_visible is None else n_visible
    counts = np.bincount(state_index(data), minlength=2**m)
    return counts / counts.sum()


def kl_divergence(p_true, q_model) -> float:
    """KL(p || q) in nats; ``inf`` when q has zero mass where p does not."""
    p = np.asarray(p_true, dtype=np.float64)
    q = np.asarray(q_model, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"tables differ in length: {p.shape} vs {q.shape}")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p_true must sum to 1")
    support = p > 0
    if np.any(q[support] <= 0):
        return float("inf")
    return float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))


def moving_average(values, window: int = 10) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` points average what is available."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return x
    c = np.cumsum(np.insert(x, 0, 0.0))
    out = np.empty_like(x)
    for i in range(x.size):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out
