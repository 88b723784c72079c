"""Annealed importance sampling estimate of log Z for binary RBMs.

The path interpolates parameters linearly from a base-rate model (zero
weights, zero hidden biases, visible biases either zero or fitted to data
marginals) to the target. Because the energy is linear in the parameters
this is the geometric path between the two joint distributions, and the
hidden layer can be summed out of every intermediate density.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit, logsumexp

from ..rbm import RbmParams

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AisConfig:
    n_temps: int = 1000
    n_runs: int = 100
    base: str = "uniform"

    def __post_init__(self):
        if self.n_temps < 2:
            raise ValueError("n_temps must be >= 2")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.base not in ("uniform", "fitted-visible-bias"):
            raise ValueError(f"unknown AIS base {self.base!r}")


class AisResult(NamedTuple):
    log_z: float
    stderr: float
    n_dropped: int = 0


def base_visible_bias(data, eps=1e-3):
    """Log-odds of the (smoothed) per-unit data marginals."""
    mean = np.clip(np.asarray(data, dtype=np.float64).mean(axis=0), eps, 1 - eps)
    return np.log(mean) - np.log1p(-mean)


def _log_pstar(v, beta, params, b_a):
    bv = (1.0 - beta) * b_a + beta * params.b_v
    return v @ bv + np.logaddexp(0.0, beta * (v @ params.W + params.b_h)).sum(axis=1)


def ais_log_partition(params: RbmParams, cfg: AisConfig = AisConfig(), rng=None, data=None) -> AisResult:
    """Estimate log Z with ``cfg.n_runs`` independent annealing chains.

    Returns the log of the mean importance weight plus the base log Z, the
    delta-method standard error of that log, and the number of chains
    dropped for producing a non-finite weight.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    m, n = params.W.shape
    if cfg.base == "fitted-visible-bias":
        if data is None:
            raise ValueError("fitted-visible-bias base needs the training data")
        b_a = base_visible_bias(data)
    else:
        b_a = np.zeros(m)
    log_z_base = float(np.logaddexp(0.0, b_a).sum() + n * np.log(2.0))

    betas = np.linspace(0.0, 1.0, cfg.n_temps)
    v = (rng.random((cfg.n_runs, m)) < expit(b_a)).astype(np.float64)
    log_w = np.zeros(cfg.n_runs)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, cfg.n_temps):
            b0, b1 = betas[k - 1], betas[k]
            log_w += _log_pstar(v, b1, params, b_a) - _log_pstar(v, b0, params, b_a)
            if k == cfg.n_temps - 1:
                break
            h = (rng.random((cfg.n_runs, n)) < expit(b1 * (v @ params.W + params.b_h))).astype(np.float64)
            bv = (1.0 - b1) * b_a + b1 * params.b_v
            v = (rng.random((cfg.n_runs, m)) < expit(b1 * (h @ params.W.T) + bv)).astype(np.float64)

    finite = np.isfinite(log_w)
    n_dropped = int((~finite).sum())
    if n_dropped:
        log.warning("AIS dropped %d of %d runs with non-finite weights", n_dropped, cfg.n_runs)
    log_w = log_w[finite]
    if log_w.size == 0:
        return AisResult(float("nan"), float("inf"), n_dropped)
    log_mean = float(logsumexp(log_w) - np.log(log_w.size))
    w = np.exp(log_w - log_w.max())
    if w.size > 1:
        stderr = float(np.std(w, ddof=1) / (np.sqrt(w.size) * w.mean()))
    else:
        stderr = float("inf")
    return AisResult(log_z_base + log_mean, stderr, n_dropped)
