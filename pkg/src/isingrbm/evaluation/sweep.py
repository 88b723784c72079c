"""Noise/variation sweep: retrain under each (variation_rms, noise_rms) pair."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .. import hardware as hwm
from ..rbm import MAX_ENUM_UNITS, RbmParams, exact_partition
from ..training import TrainConfig, train
from .ais import AisConfig, ais_log_partition
from .metrics import EvalReport, avg_log_prob, moving_average

GRID_25_LEVELS = (0.03, 0.10, 0.17, 0.24, 0.30)


def grid_25(levels=GRID_25_LEVELS):
    return [(v, n) for v in levels for n in levels]


@dataclass(frozen=True)
class SweepSpec:
    """Everything needed to train and score one grid point."""

    data: np.ndarray
    init: RbmParams
    train: TrainConfig
    hw: hwm.HwConfig = field(default_factory=hwm.HwConfig)
    seed: int = 0
    ais: AisConfig = AisConfig(n_temps=200, n_runs=50)
    smooth_window: int = 10


@dataclass
class SweepPoint:
    variation_rms: float
    noise_rms: float
    report: EvalReport
    window: int = 10

    @property
    def smoothed(self):
        """Trajectory after a trailing moving average of ``window`` snapshots."""
        values = [v for _, v in self.report.trajectory]
        its = [i for i, _ in self.report.trajectory]
        return list(zip(its, moving_average(values, self.window)))


def score(params: RbmParams, data, rng=None, ais: AisConfig = None):
    """(avg_log_prob, log_z, stderr): exact when enumerable, AIS otherwise."""
    if params.n_visible + params.n_hidden <= MAX_ENUM_UNITS:
        log_z, err = exact_partition(params), 0.0
    else:
        log_z, err, _ = ais_log_partition(params, ais or AisConfig(), rng, data=data)
    return avg_log_prob(params, data, log_z), log_z, err


def point_key(variation_rms, noise_rms):
    return (int(round(variation_rms * 1e6)), int(round(noise_rms * 1e6)))


def run_point(spec: SweepSpec, variation_rms: float, noise_rms: float) -> SweepPoint:
    """Train at one grid point with streams derived from (seed, grid values)."""
    key = point_key(variation_rms, noise_rms)
    ss = np.random.SeedSequence(spec.seed, spawn_key=key)
    train_ss, chip_ss, eval_ss = ss.spawn(3)
    chip_seed = int(chip_ss.generate_state(1)[0])
    hw_cfg = replace(spec.hw, variation_rms=variation_rms, noise_rms=noise_rms, seed=chip_seed)
    trace = train(spec.init, spec.data, spec.train, hw_cfg, np.random.default_rng(train_ss))
    eval_rng = np.random.default_rng(eval_ss)
    trajectory = []
    final = None
    for it, params in trace.snapshots:
        lp, log_z, err = score(params, spec.data, eval_rng, spec.ais)
        trajectory.append((it, lp))
        final = (lp, log_z, err)
    report = EvalReport(avg_log_prob=final[0], log_z=final[1], log_z_stderr=final[2], trajectory=trajectory)
    return SweepPoint(variation_rms, noise_rms, report, spec.smooth_window)


def _run(args):
    spec, v, n = args
    return run_point(spec, v, n)


def noise_sweep(grid, spec: SweepSpec, workers: int = 1) -> list:
    grid = [(float(v), float(n)) for v, n in grid]
    if not grid:
        raise ValueError("grid must not be empty")
    jobs = [(spec, v, n) for v, n in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run, jobs))
    return [_run(j) for j in jobs]
