"""Training procedures: software CD-k/PCD, the Gibbs-sampler accelerator (GS),
the in-substrate Boltzmann gradient follower (BGF), and exact maximum
likelihood for small models.

All gradients are ascent directions; every update adds.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from . import hardware as hwm
from ._kernels import bgf_segment
from .rbm import RbmParams, exact_gradient

log = logging.getLogger(__name__)

ALGORITHMS = ("CD", "GS", "BGF", "ML")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by every trainer.

    ``epochs`` counts passes over the data (the outer loop of CD); for ML it
    is the number of full-batch gradient steps. ``snapshot_every`` counts
    parameter updates: minibatches for CD/GS, training samples for BGF,
    gradient steps for ML. Zero records only the initial and final states.
    """

    alpha: float = 0.1
    k: int = 1
    batch_size: int = 100
    epochs: int = 1
    p: int = 1
    persistent: bool = False
    algo: str = "CD"
    snapshot_every: int = 0
    shuffle: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.algo not in ALGORITHMS:
            raise ValueError(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.algo == "BGF" and self.batch_size != 1:
            raise ValueError("BGF updates after every sample: batch_size must be 1")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class TrainTrace:
    snapshots: list = field(default_factory=list)
    final: RbmParams = None
    rng_seed: int = None

    @property
    def iterations(self):
        return [it for it, _ in self.snapshots]

    def equal(self, other: "TrainTrace") -> bool:
        if len(self.snapshots) != len(other.snapshots):
            return False
        for (i, a), (j, b) in zip(self.snapshots, other.snapshots):
            if i != j or not a.equal(b):
                return False
        return self.final.equal(other.final)


class _Snapshotter:
    def __init__(self, every):
        self.every = every
        self.snapshots = []

    def __call__(self, iteration, params, force=False):
        if force or (self.every and iteration % self.every == 0):
            if self.snapshots and self.snapshots[-1][0] == iteration:
                return
            self.snapshots.append((iteration, params.copy()))


def _as_data(data, n_visible):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D array of bit rows")
    if data.shape[1] != n_visible:
        raise ValueError(f"data rows have length {data.shape[1]}, model has {n_visible} visible units")
    return data


def _resolve_rng(rng, cfg):
    if rng is None:
        return np.random.default_rng(cfg.seed)
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    return rng


def _epoch_order(n, cfg, rng):
    return rng.permutation(n) if cfg.shuffle else np.arange(n)


def _minibatch_loop(params, data, cfg, rng, sample_h, sample_v, on_batch=None):
    """Algorithm shared by CD and GS; only the samplers differ."""
    params = params.copy()
    W, b_v, b_h = params.W, params.b_v, params.b_h
    data = _as_data(data, params.n_visible)
    n = data.shape[0]
    bs = cfg.batch_size
    snap = _Snapshotter(cfg.snapshot_every)
    snap(0, params, force=True)
    particles = None
    if cfg.persistent:
        particles = (rng.random((cfg.p, params.n_hidden)) < 0.5).astype(np.float64)
    it = 0
    for _ in range(cfg.epochs):
        order = _epoch_order(n, cfg, rng)
        for start in range(0, n, bs):
            v_pos = data[order[start:start + bs]]
            if on_batch is not None:
                on_batch(params)
            h_pos = sample_h(params, v_pos)
            h_neg = particles if cfg.persistent else h_pos
            for _ in range(cfg.k):
                v_neg = sample_v(params, h_neg)
                h_neg = sample_h(params, v_neg)
            if cfg.persistent:
                particles = h_neg
            m_pos = v_pos.shape[0]
            m_neg = v_neg.shape[0]
            W += cfg.alpha * (v_pos.T @ h_pos / m_pos - v_neg.T @ h_neg / m_neg)
            b_v += cfg.alpha * (v_pos.mean(axis=0) - v_neg.mean(axis=0))
            b_h += cfg.alpha * (h_pos.mean(axis=0) - h_neg.mean(axis=0))
            it += 1
            snap(it, params)
    snap(it, params, force=True)
    return TrainTrace(snap.snapshots, params.copy(), cfg.seed)


def cd_k_train(params: RbmParams, data, cfg: TrainConfig, rng=None) -> TrainTrace:
    """Contrastive divergence (or PCD when ``cfg.persistent``) in software."""
    rng = _resolve_rng(rng, cfg)

    def sample_h(p, v):
        return (rng.random((v.shape[0], p.n_hidden)) < expit(v @ p.W + p.b_h)).astype(np.float64)

    def sample_v(p, h):
        return (rng.random((h.shape[0], p.n_visible)) < expit(h @ p.W.T + p.b_v)).astype(np.float64)

    return _minibatch_loop(params, data, cfg, rng, sample_h, sample_v)


def gs_train(params: RbmParams, data, cfg: TrainConfig, hw_cfg: hwm.HwConfig, rng=None,
             hw: hwm.HwState = None) -> TrainTrace:
    """Host-side CD updates with every sampling pass done on the substrate.

    The coupling array is re-programmed from the host parameters at each
    minibatch; fabrication gains stay with the chip. Pass ``hw`` to reuse a
    chip, otherwise one is fabricated from ``hw_cfg.seed``.
    """
    rng = _resolve_rng(rng, cfg)
    if hw is None:
        hw = hwm.hw_init(params, hw_cfg, p=1)

    def sample_h(_, v):
        return hwm.hw_sample_pass(hw, v, hwm.VISIBLE_TO_HIDDEN, hw_cfg, rng)

    def sample_v(_, h):
        return hwm.hw_sample_pass(hw, h, hwm.HIDDEN_TO_VISIBLE, hw_cfg, rng)

    def program(current):
        hwm.hw_program(hw, current, hw_cfg)

    return _minibatch_loop(params, data, cfg, rng, sample_h, sample_v, on_batch=program)


def _pump_phase(hw, v, h, direction, alpha, cfg):
    p = hw.params
    mask = np.outer(v, h) > 0
    if mask.any():
        p.W[mask] = hwm.charge_pump_update(p.W[mask], direction, alpha, hw.static_gain[mask], cfg)
    on_v = v > 0
    if on_v.any():
        p.b_v[on_v] = hwm.charge_pump_update(p.b_v[on_v], direction, alpha, hw.vbias_gain[on_v], cfg)
    on_h = h > 0
    if on_h.any():
        p.b_h[on_h] = hwm.charge_pump_update(p.b_h[on_h], direction, alpha, hw.hbias_gain[on_h], cfg)


def bgf_step(hw: hwm.HwState, v, alpha, hw_cfg: hwm.HwConfig, rng):
    """One training sample: settle, pump up, anneal a particle, pump down.

    Returns ``(h_pos, v_neg, h_neg)``. The negative phase runs on the
    couplings already raised by this sample's positive phase.
    """
    v = np.asarray(v, dtype=np.float64)
    h_pos = hwm.hw_sample_pass(hw, v, hwm.VISIBLE_TO_HIDDEN, hw_cfg, rng)
    _pump_phase(hw, v, h_pos, hwm.INCREMENT, alpha, hw_cfg)
    idx = hw.next_particle
    hw.next_particle = (idx + 1) % hw.n_particles
    v_neg, h_neg = hwm.anneal_run(hw, idx, hw_cfg.anneal_passes, hw_cfg, rng)
    _pump_phase(hw, v_neg, h_neg, hwm.DECREMENT, alpha, hw_cfg)
    return h_pos, v_neg, h_neg


def _bgf_fast_segment(hw, rows, alpha, hw_cfg, rng):
    m, n = hw.params.W.shape
    passes = hw_cfg.anneal_passes
    per_sample = n + passes * (m + n)
    count = rows.shape[0] * per_sample
    unif = rng.random(count)
    if hw_cfg.noise_rms > 0:
        normals = hw.noise_rng.standard_normal(count)
    else:
        normals = np.empty(0)
    temps = hwm.anneal_temperatures(passes, hw_cfg)
    p = hw.params
    hw.next_particle = bgf_segment(
        p.W, p.b_v, p.b_h, hw.static_gain, hw.vbias_gain, hw.hbias_gain,
        hw.node_gain_v, hw.node_gain_h, hw.particles, hw.next_particle,
        np.ascontiguousarray(rows), unif, normals, temps, float(alpha),
        float(hw_cfg.w_min), float(hw_cfg.w_max), hw_cfg.pump_mode == "headroom",
        float(hw_cfg.sigmoid_gain), float(hw_cfg.sigmoid_offset), float(hw_cfg.noise_rms),
    )


def bgf_train(hw: hwm.HwState, data, cfg: TrainConfig, hw_cfg: hwm.HwConfig, rng=None,
              fast: bool = True) -> TrainTrace:
    """Boltzmann gradient follower: minibatch 1, in-place charge-pump updates.

    ``cfg.alpha`` is the per-event pump magnitude, already scaled down for a
    batch size of one. Snapshots are ADC readouts. ``fast`` selects the
    compiled loop, which consumes the random streams in the same order as
    the step-by-step reference (``fast=False``).
    """
    if cfg.batch_size != 1:
        raise ValueError("BGF updates after every sample: batch_size must be 1")
    rng = _resolve_rng(rng, cfg)
    data = _as_data(data, hw.params.n_visible)
    n = data.shape[0]
    snap = _Snapshotter(cfg.snapshot_every)
    snap(0, hwm.hw_readout(hw, hw_cfg), force=True)
    it = 0
    for _ in range(cfg.epochs):
        order = _epoch_order(n, cfg, rng)
        if fast:
            pos = 0
            while pos < n:
                stop = n
                if cfg.snapshot_every:
                    stop = min(n, pos + cfg.snapshot_every - it % cfg.snapshot_every)
                _bgf_fast_segment(hw, data[order[pos:stop]], cfg.alpha, hw_cfg, rng)
                it += stop - pos
                pos = stop
                if cfg.snapshot_every and it % cfg.snapshot_every == 0:
                    snap(it, hwm.hw_readout(hw, hw_cfg))
        else:
            for t in order:
                bgf_step(hw, data[t], cfg.alpha, hw_cfg, rng)
                it += 1
                if cfg.snapshot_every and it % cfg.snapshot_every == 0:
                    snap(it, hwm.hw_readout(hw, hw_cfg))
    final = hwm.hw_readout(hw, hw_cfg)
    snap(it, final, force=True)
    return TrainTrace(snap.snapshots, final, cfg.seed)


def ml_train(params: RbmParams, data, cfg: TrainConfig, rng=None) -> TrainTrace:
    """Full-batch exact gradient ascent; ``cfg.epochs`` gradient steps."""
    params = params.copy()
    data = _as_data(data, params.n_visible)
    snap = _Snapshotter(cfg.snapshot_every)
    snap(0, params, force=True)
    for it in range(1, cfg.epochs + 1):
        g = exact_gradient(params, data)
        params.W += cfg.alpha * g.dW
        params.b_v += cfg.alpha * g.db_v
        params.b_h += cfg.alpha * g.db_h
        snap(it, params)
    snap(cfg.epochs, params, force=True)
    return TrainTrace(snap.snapshots, params.copy(), cfg.seed)


def train(params: RbmParams, data, cfg: TrainConfig, hw_cfg: hwm.HwConfig = None, rng=None) -> TrainTrace:
    """Dispatch on ``cfg.algo``. BGF fabricates a chip holding ``cfg.p`` particles."""
    rng = _resolve_rng(rng, cfg)
    if cfg.algo == "CD":
        return cd_k_train(params, data, cfg, rng)
    if cfg.algo == "ML":
        return ml_train(params, data, cfg, rng)
    hw_cfg = hw_cfg or hwm.HwConfig()
    if cfg.algo == "GS":
        return gs_train(params, data, cfg, hw_cfg, rng)
    hw = hwm.hw_init(params, hw_cfg, p=cfg.p, rng=rng)
    return bgf_train(hw, data, cfg, hw_cfg, rng)
