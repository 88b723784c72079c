"""Behavioral model of the augmented analog Ising substrate.

Two random sources are kept apart on purpose:

* the *chip* stream, seeded from ``HwConfig.seed``, fixes fabrication
  variation at :func:`hw_init` and then drives the dynamic activation noise;
* the *sampling* stream is the caller's generator and feeds the comparator
  thresholds (one uniform per sampled unit, exactly like the software path).

With every nonideality at zero the chip stream is never touched during
sampling, which is what makes hardware runs seed-identical to software Gibbs
sampling.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .rbm import RbmParams

VISIBLE_TO_HIDDEN = "v2h"
HIDDEN_TO_VISIBLE = "h2v"
INCREMENT = "inc"
DECREMENT = "dec"

MIN_GAIN = 0.05


@dataclass(frozen=True)
class HwConfig:
    """Analog nonideality parameters.

    ``pump_mode`` selects the charge-pump transfer: ``"headroom"`` shrinks
    each step linearly with the distance left to the rail it is moving
    toward; ``"ideal"`` applies the nominal step and only clips.
    ``anneal_schedule`` is ``"flat"`` (T = 1 on every pass) or
    ``"geometric"`` (T_start down to 1).
    """

    variation_rms: float = 0.0
    noise_rms: float = 0.0
    sigmoid_gain: float = 1.0
    sigmoid_offset: float = 0.0
    gain_variation_rms: float = 0.0
    w_min: float = -8.0
    w_max: float = 8.0
    pump_step: float = 0.01
    pump_mode: str = "headroom"
    readout_bits: int = 8
    anneal_passes: int = 5
    anneal_schedule: str = "flat"
    anneal_t_start: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("variation_rms", "noise_rms", "gain_variation_rms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.w_min < self.w_max:
            raise ValueError("w_min must be below w_max")
        if not self.pump_step > 0:
            raise ValueError("pump_step must be > 0")
        if not (isinstance(self.readout_bits, (int, np.integer)) and 0 <= self.readout_bits <= 16):
            raise ValueError("readout_bits must be an integer in 0..16")
        if self.pump_mode not in ("headroom", "ideal"):
            raise ValueError(f"unknown pump_mode {self.pump_mode!r}")
        if self.anneal_schedule not in ("flat", "geometric"):
            raise ValueError(f"unknown anneal_schedule {self.anneal_schedule!r}")
        if self.anneal_passes < 1:
            raise ValueError("anneal_passes must be >= 1")
        if self.anneal_t_start < 1.0:
            raise ValueError("anneal_t_start must be >= 1")

    @classmethod
    def ideal(cls, rail: float = 1e3, **kw) -> "HwConfig":
        """No variation, no noise, unit sigmoid, wide rails, exact readout."""
        base = dict(variation_rms=0.0, noise_rms=0.0, gain_variation_rms=0.0,
                    sigmoid_gain=1.0, sigmoid_offset=0.0, w_min=-rail, w_max=rail,
                    readout_bits=0)
        base.update(kw)
        return cls(**base)

    def with_(self, **kw) -> "HwConfig":
        return replace(self, **kw)


@dataclass
class HwState:
    """Mutable in-substrate model owned by a single training chain."""

    params: RbmParams
    static_gain: np.ndarray
    vbias_gain: np.ndarray
    hbias_gain: np.ndarray
    node_gain_v: np.ndarray
    node_gain_h: np.ndarray
    particles: np.ndarray
    noise_rng: np.random.Generator = field(repr=False)
    next_particle: int = 0

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]


def _fab_gains(rng, rms, shape):
    if rms == 0:
        return np.ones(shape)
    return np.maximum(1.0 + rms * rng.standard_normal(shape), MIN_GAIN)


def _clip_params(params, cfg):
    return RbmParams(
        np.clip(params.W, cfg.w_min, cfg.w_max),
        np.clip(params.b_v, cfg.w_min, cfg.w_max),
        np.clip(params.b_h, cfg.w_min, cfg.w_max),
    )


def hw_init(params: RbmParams, cfg: HwConfig, p: int = 1, rng=None) -> HwState:
    """Program ``params`` onto a freshly fabricated chip.

    Fabrication gains come from the chip stream (``cfg.seed``); particles are
    drawn uniformly from ``rng``, or from the chip stream when ``rng`` is None.
    """
    if p < 1:
        raise ValueError("need at least one particle")
    chip_seq = np.random.SeedSequence(cfg.seed)
    fab_seq, noise_seq = chip_seq.spawn(2)
    fab = np.random.default_rng(fab_seq)
    m, n = params.W.shape
    static_gain = _fab_gains(fab, cfg.variation_rms, (m, n))
    vbias_gain = _fab_gains(fab, cfg.variation_rms, m)
    hbias_gain = _fab_gains(fab, cfg.variation_rms, n)
    node_gain_v = _fab_gains(fab, cfg.gain_variation_rms, m)
    node_gain_h = _fab_gains(fab, cfg.gain_variation_rms, n)
    particle_rng = rng if rng is not None else fab
    particles = (particle_rng.random((p, n)) < 0.5).astype(np.float64)
    return HwState(
        params=_clip_params(params, cfg),
        static_gain=static_gain,
        vbias_gain=vbias_gain,
        hbias_gain=hbias_gain,
        node_gain_v=node_gain_v,
        node_gain_h=node_gain_h,
        particles=particles,
        noise_rng=np.random.default_rng(noise_seq),
    )


def hw_program(hw: HwState, params: RbmParams, cfg: HwConfig) -> None:
    """Overwrite the stored couplings and biases; fabrication gains persist."""
    if params.W.shape != hw.params.W.shape:
        raise ValueError(f"params shape {params.W.shape} does not match chip {hw.params.W.shape}")
    hw.params = _clip_params(params, cfg)


def hw_sigmoid(x, gain, cfg: HwConfig):
    """Sigmoid unit transfer 1 / (1 + exp(-c1 * gain * (x - c2)))."""
    return expit(cfg.sigmoid_gain * gain * (x - cfg.sigmoid_offset))


def hw_activation(hw: HwState, clamped, direction, cfg: HwConfig):
    """Summed currents into the target layer plus dynamic noise.

    Returns ``(activation, noise)``. The noise on each pass (row) has standard
    deviation ``noise_rms`` times the RMS of that row's noiseless activations.
    """
    p = hw.params
    x = np.asarray(clamped, dtype=np.float64)
    if direction == VISIBLE_TO_HIDDEN:
        if x.shape[-1] != p.n_visible:
            raise ValueError(f"clamped visible vector has length {x.shape[-1]}, expected {p.n_visible}")
        a = x @ (p.W * hw.static_gain) + p.b_h * hw.hbias_gain
    elif direction == HIDDEN_TO_VISIBLE:
        if x.shape[-1] != p.n_hidden:
            raise ValueError(f"clamped hidden vector has length {x.shape[-1]}, expected {p.n_hidden}")
        a = x @ (p.W * hw.static_gain).T + p.b_v * hw.vbias_gain
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if cfg.noise_rms == 0:
        return a, np.zeros_like(a)
    scale = np.sqrt(np.mean(a * a, axis=-1, keepdims=True))
    eps = cfg.noise_rms * scale * hw.noise_rng.standard_normal(a.shape)
    return a + eps, eps


def hw_sample_pass(hw: HwState, clamped, direction, cfg: HwConfig, rng, temperature=1.0):
    """One settle-and-compare pass of the target layer.

    ``clamped`` may be a single vector or a batch of rows (one pass each).
    Each target unit compares its sigmoid output with a fresh uniform from
    ``rng``; the output bits are float64 0/1 arrays.
    """
    a, _ = hw_activation(hw, clamped, direction, cfg)
    gain = hw.node_gain_h if direction == VISIBLE_TO_HIDDEN else hw.node_gain_v
    if temperature != 1.0:
        gain = gain / temperature
    prob = hw_sigmoid(a, gain, cfg)
    return (rng.random(prob.shape) < prob).astype(np.float64)


def charge_pump_update(w, direction, magnitude=None, gain=1.0, cfg: HwConfig = None, rng=None):
    """Nudge stored values toward a rail by one charge-redistribution event.

    In headroom mode the step is ``gain * magnitude`` scaled by the fraction
    of the rail range still available in the direction of travel, so a value
    sitting on a rail does not move toward it. ``magnitude`` defaults to
    ``cfg.pump_step``. Works elementwise on arrays. ``rng`` is unused; the
    pump is deterministic given its gain.
    """
    if magnitude is None:
        magnitude = cfg.pump_step
    w = np.asarray(w, dtype=np.float64)
    span = cfg.w_max - cfg.w_min
    step = gain * magnitude
    if direction == INCREMENT:
        if cfg.pump_mode == "headroom":
            step = step * (cfg.w_max - w) / span
        out = w + step
    elif direction == DECREMENT:
        if cfg.pump_mode == "headroom":
            step = step * (w - cfg.w_min) / span
        out = w - step
    else:
        raise ValueError(f"unknown direction {direction!r}")
    out = np.clip(out, cfg.w_min, cfg.w_max)
    return float(out) if out.ndim == 0 else out


def anneal_temperatures(n_passes: int, cfg: HwConfig) -> np.ndarray:
    if cfg.anneal_schedule == "flat" or n_passes == 1:
        return np.ones(n_passes)
    frac = np.arange(n_passes - 1, -1, -1) / (n_passes - 1)
    return cfg.anneal_t_start**frac


def anneal_run(hw: HwState, particle_index: int, n_passes: int, cfg: HwConfig, rng):
    """Start from a stored particle, run ``n_passes`` h->v->h sweeps, write h back."""
    if not 0 <= particle_index < hw.n_particles:
        raise IndexError(f"particle index {particle_index} out of range for {hw.n_particles} particles")
    if n_passes < 1:
        raise ValueError("n_passes must be >= 1")
    h = hw.particles[particle_index]
    v = None
    for t in anneal_temperatures(n_passes, cfg):
        v = hw_sample_pass(hw, h, HIDDEN_TO_VISIBLE, cfg, rng, temperature=t)
        h = hw_sample_pass(hw, v, VISIBLE_TO_HIDDEN, cfg, rng, temperature=t)
    hw.particles[particle_index] = h
    return v, h.copy()


def quantize(x, bits, lo, hi):
    """Round-to-nearest uniform quantizer with LSB = (hi - lo) / 2^bits.

    Codes run from 0 (exactly ``lo``) to 2^bits (exactly ``hi``), so the
    error never exceeds half an LSB anywhere on the rails.
    """
    if bits == 0:
        return np.array(x, dtype=np.float64, copy=True)
    levels = 2**bits
    lsb = (hi - lo) / levels
    code = np.clip(np.rint((np.asarray(x) - lo) / lsb), 0, levels)
    return lo + code * lsb


def hw_readout(hw: HwState, cfg: HwConfig) -> RbmParams:
    """ADC readout of the stored couplings and biases."""
    p = hw.params
    q = lambda x: quantize(x, cfg.readout_bits, cfg.w_min, cfg.w_max)  # noqa: E731
    return RbmParams(q(p.W), q(p.b_v), q(p.b_h))
