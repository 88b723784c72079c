"""Exact RBM mathematics over binary {0,1} units.

Everything here is deterministic given its inputs plus an explicit
``numpy.random.Generator``; nothing touches global random state. The exact
routines enumerate visible configurations only and sum the hidden layer out
analytically, so a model with M visible units costs 2^M terms.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit, logsumexp

MAX_ENUM_UNITS = 24


class EnumerationGuardError(ValueError):
    """Raised when an exact computation would enumerate too many states."""


@dataclass
class RbmParams:
    """Weights ``W`` (M visible x N hidden) and the two bias vectors."""

    W: np.ndarray
    b_v: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64, ndmin=2)
        self.b_v = np.array(self.b_v, dtype=np.float64).reshape(-1)
        self.b_h = np.array(self.b_h, dtype=np.float64).reshape(-1)
        m, n = self.W.shape
        if m < 1 or n < 1:
            raise ValueError(f"need at least one visible and one hidden unit, got W shape {self.W.shape}")
        if self.b_v.shape != (m,):
            raise ValueError(f"b_v has length {self.b_v.size}, expected {m} (visible units)")
        if self.b_h.shape != (n,):
            raise ValueError(f"b_h has length {self.b_h.size}, expected {n} (hidden units)")
        for name in ("W", "b_v", "b_h"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def n_visible(self) -> int:
        return self.W.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> "RbmParams":
        return cls(np.zeros((n_visible, n_hidden)), np.zeros(n_visible), np.zeros(n_hidden))

    @classmethod
    def random(cls, n_visible, n_hidden, rng, scale=0.01) -> "RbmParams":
        """Gaussian weights with standard deviation ``scale``, zero biases."""
        W = scale * rng.standard_normal((n_visible, n_hidden))
        return cls(W, np.zeros(n_visible), np.zeros(n_hidden))

    def copy(self) -> "RbmParams":
        return RbmParams(self.W.copy(), self.b_v.copy(), self.b_h.copy())

    def transposed(self) -> "RbmParams":
        """Swap the roles of the visible and hidden layers."""
        return RbmParams(self.W.T.copy(), self.b_h.copy(), self.b_v.copy())

    def allclose(self, other: "RbmParams", atol=0.0, rtol=0.0) -> bool:
        return (
            np.allclose(self.W, other.W, atol=atol, rtol=rtol)
            and np.allclose(self.b_v, other.b_v, atol=atol, rtol=rtol)
            and np.allclose(self.b_h, other.b_h, atol=atol, rtol=rtol)
        )

    def equal(self, other: "RbmParams") -> bool:
        return (
            np.array_equal(self.W, other.W)
            and np.array_equal(self.b_v, other.b_v)
            and np.array_equal(self.b_h, other.b_h)
        )


@dataclass
class GradientEstimate:
    """Ascent direction of the mean log-likelihood."""

    dW: np.ndarray
    db_v: np.ndarray
    db_h: np.ndarray

    def max_abs(self) -> float:
        return float(max(np.abs(self.dW).max(), np.abs(self.db_v).max(), np.abs(self.db_h).max()))

    def norm(self) -> float:
        return float(np.sqrt((self.dW**2).sum() + (self.db_v**2).sum() + (self.db_h**2).sum()))


def _check_len(x, expected, what):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != expected:
        raise ValueError(f"{what} has length {x.shape[-1]}, expected {expected}")
    return x


def sigmoid(x):
    return expit(x)


def energy(params: RbmParams, v, h):
    """E(v, h) = -v.W.h - b_v.v - b_h.h. Accepts single vectors or stacked rows."""
    v = _check_len(v, params.n_visible, "v (visible units)")
    h = _check_len(h, params.n_hidden, "h (hidden units)")
    coupling = np.einsum("...i,ij,...j->...", v, params.W, h)
    e = -coupling - v @ params.b_v - h @ params.b_h
    return float(e) if np.ndim(e) == 0 else e


def hidden_conditional(params: RbmParams, v):
    """P(h_j = 1 | v) for every hidden unit."""
    v = _check_len(v, params.n_visible, "v (visible units)")
    return expit(v @ params.W + params.b_h)


def visible_conditional(params: RbmParams, h):
    """P(v_i = 1 | h) for every visible unit."""
    h = _check_len(h, params.n_hidden, "h (hidden units)")
    return expit(h @ params.W.T + params.b_v)


def sample_bernoulli(probs, rng):
    """Independent Bernoulli draws, returned as float64 arrays of 0.0/1.0.

    One uniform is consumed per element, in C order, so equal generator
    states give equal samples.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(~(probs >= 0.0) | ~(probs <= 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    return (rng.random(probs.shape) < probs).astype(np.float64)


def spins_from_bits(bits):
    """sigma = 2b - 1."""
    bits = np.asarray(bits)
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bit vector entries must be 0 or 1")
    return 2 * bits.astype(np.int64) - 1


def bits_from_spins(spins):
    spins = np.asarray(spins)
    if np.any((spins != -1) & (spins != 1)):
        raise ValueError("spin vector entries must be -1 or +1")
    return (spins.astype(np.int64) + 1) // 2


def ising_from_rbm(params: RbmParams):
    """Rewrite the bit-form RBM energy as an Ising Hamiltonian over M+N spins.

    Returns ``(J, fields, offset)`` such that for any bit state (v, h) with
    spins s = 2[v, h] - 1,

        energy(params, v, h) == ising_energy(J, fields, s) + offset

    ``J`` is the symmetric (M+N)x(M+N) coupling matrix with zero diagonal
    and only visible-hidden blocks populated; the external field strength mu
    is absorbed into ``fields``.
    """
    m, n = params.W.shape
    J = np.zeros((m + n, m + n))
    J[:m, m:] = params.W / 4.0
    J[m:, :m] = params.W.T / 4.0
    fields = np.concatenate([
        params.W.sum(axis=1) / 4.0 + params.b_v / 2.0,
        params.W.sum(axis=0) / 4.0 + params.b_h / 2.0,
    ])
    offset = -(params.W.sum() / 4.0 + params.b_v.sum() / 2.0 + params.b_h.sum() / 2.0)
    return J, fields, offset


def ising_energy(J, fields, spins, mu=1.0):
    """H = -sum_{i<j} J_ij s_i s_j - mu sum_i h_i s_i."""
    s = np.asarray(spins, dtype=np.float64)
    upper = np.triu(J, k=1)
    return float(-(s @ upper @ s) - mu * (fields @ s))


@lru_cache(maxsize=8)
def visible_states(n_visible: int) -> np.ndarray:
    """All 2^M visible configurations, row k is the binary expansion of k (unit 0 is the MSB).

    The returned array is cached and read-only.
    """
    idx = np.arange(2**n_visible, dtype=np.int64)
    shifts = np.arange(n_visible - 1, -1, -1, dtype=np.int64)
    states = ((idx[:, None] >> shifts) & 1).astype(np.float64)
    states.flags.writeable = False
    return states


def state_index(bits) -> np.ndarray:
    """Inverse of :func:`visible_states` for rows of bits."""
    bits = np.asarray(bits, dtype=np.int64)
    m = bits.shape[-1]
    weights = 1 << np.arange(m - 1, -1, -1, dtype=np.int64)
    return bits @ weights


def check_enumerable(params: RbmParams, max_units: int = MAX_ENUM_UNITS):
    m, n = params.W.shape
    if m + n > max_units:
        raise EnumerationGuardError(
            f"exact enumeration needs M+N <= {max_units}, got M={m}, N={n}"
        )


def log_unnormalized_marginal(params: RbmParams, v):
    """log sum_h exp(-E(v, h)), i.e. minus the free energy of each visible row."""
    v = np.asarray(v, dtype=np.float64)
    return v @ params.b_v + np.logaddexp(0.0, v @ params.W + params.b_h).sum(axis=-1)


def exact_partition(params: RbmParams, max_units: int = MAX_ENUM_UNITS) -> float:
    """log Z by enumerating the visible layer and summing hidden units analytically."""
    check_enumerable(params, max_units)
    return float(logsumexp(log_unnormalized_marginal(params, visible_states(params.n_visible))))


def brute_force_partition(params: RbmParams) -> float:
    """log Z by summing exp(-E) over every joint (v, h) state. Test oracle only."""
    states_v = visible_states(params.n_visible)
    states_h = visible_states(params.n_hidden)
    neg_e = (
        states_v @ params.W @ states_h.T
        + (states_v @ params.b_v)[:, None]
        + (states_h @ params.b_h)[None, :]
    )
    return float(logsumexp(neg_e))


def _as_data(params, data):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.shape[0] == 0:
        raise ValueError("dataset is empty")
    return _check_len(data, params.n_visible, "data rows")


def exact_log_likelihood(params: RbmParams, data, max_units: int = MAX_ENUM_UNITS) -> float:
    """Sum over the dataset of log P(v)."""
    data = _as_data(params, data)
    log_z = exact_partition(params, max_units)
    return float(np.sum(log_unnormalized_marginal(params, data)) - data.shape[0] * log_z)


def visible_distribution(params: RbmParams, max_units: int = MAX_ENUM_UNITS) -> np.ndarray:
    """P(v) for all 2^M visible states, ordered as :func:`visible_states`."""
    check_enumerable(params, max_units)
    logp = log_unnormalized_marginal(params, visible_states(params.n_visible))
    return np.exp(logp - logsumexp(logp))


def exact_gradient(params: RbmParams, data, max_units: int = MAX_ENUM_UNITS) -> GradientEstimate:
    """Gradient of the per-sample mean log-likelihood.

    The data term averages v_i P(h_j=1|v) over the dataset; the model term
    is the same statistic under the exact model distribution.
    """
    data = _as_data(params, data)
    check_enumerable(params, max_units)
    ph_data = hidden_conditional(params, data)
    pos_w = data.T @ ph_data / data.shape[0]
    pos_v = data.mean(axis=0)
    pos_h = ph_data.mean(axis=0)

    states = visible_states(params.n_visible)
    pre = states @ params.W + params.b_h
    logp = states @ params.b_v + np.logaddexp(0.0, pre).sum(axis=1)
    pv = np.exp(logp - logsumexp(logp))
    ph_model = expit(pre)
    weighted = states * pv[:, None]
    neg_w = weighted.T @ ph_model
    neg_v = weighted.sum(axis=0)
    neg_h = pv @ ph_model
    return GradientEstimate(pos_w - neg_w, pos_v - neg_v, pos_h - neg_h)
