"""Learning-bias benchmark on enumerable models.

For each synthetic training distribution and each random initialization,
every requested algorithm trains a small RBM and the KL divergence from the
training distribution to the model's exact visible marginal is recorded.
Jobs are keyed by (distribution, run) and each derives its own random
streams from the master seed, so results do not depend on worker count or
completion order.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import hardware as hwm
from ..dataio import gen_synthetic
from ..rbm import MAX_ENUM_UNITS, RbmParams
from ..training import TrainConfig, bgf_train, cd_k_train, ml_train
from .metrics import kl_divergence, model_visible_distribution

log = logging.getLogger(__name__)

# fixed stream index per algorithm, independent of which subset is requested
ALGO_STREAMS = {"ML": 0, "CD-1": 1, "CD-k": 2, "BGF": 3}


@dataclass(frozen=True)
class BiasBenchConfig:
    n_distributions: int = 60
    samples_per_dist: int = 100
    visible: int = 12
    hidden: int = 4
    iterations: int = 1000
    runs: int = 400
    algorithms: tuple = ("ML", "CD-1", "BGF")
    alpha: float = 0.1
    cd_k: int = 10
    init_scale: float = 0.01
    bgf_particles: int = 10
    bgf_hw: hwm.HwConfig = field(default_factory=lambda: hwm.HwConfig.ideal(pump_mode="ideal", readout_bits=0))

    def __post_init__(self):
        if self.visible + self.hidden > MAX_ENUM_UNITS:
            raise ValueError("visible + hidden exceeds the enumeration guard")
        unknown = set(self.algorithms) - set(ALGO_STREAMS)
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}")


@dataclass
class BiasResult:
    records: list  # (distribution, run, algo, kl), sorted
    kl: dict  # algo -> sorted KL values

    def cdf_table(self):
        """Rows of (algo, rank, kl, cumulative probability)."""
        rows = []
        for algo in sorted(self.kl):
            vals = self.kl[algo]
            n = len(vals)
            for i, x in enumerate(vals):
                rows.append((algo, i + 1, float(x), (i + 1) / n))
        return rows

    def median(self, algo) -> float:
        return float(np.median(self.kl[algo]))


def _stream(master_seed, *key):
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def train_one(algo, init, data, cfg: BiasBenchConfig, rng):
    """Final parameters of one algorithm for one (distribution, run) job."""
    n = data.shape[0]
    if algo == "ML":
        return ml_train(init, data, TrainConfig(alpha=cfg.alpha, epochs=cfg.iterations, algo="ML")).final
    if algo in ("CD-1", "CD-k"):
        k = 1 if algo == "CD-1" else cfg.cd_k
        tc = TrainConfig(alpha=cfg.alpha, k=k, batch_size=n, epochs=cfg.iterations)
        return cd_k_train(init, data, tc, rng).final
    # one pass over the data per iteration; per-sample step scaled by 1/n
    tc = TrainConfig(alpha=cfg.alpha / n, batch_size=1, epochs=cfg.iterations,
                     p=cfg.bgf_particles, algo="BGF")
    hw = hwm.hw_init(init, cfg.bgf_hw, p=cfg.bgf_particles, rng=rng)
    return bgf_train(hw, data, tc, cfg.bgf_hw, rng).final


def _run_distribution(args):
    cfg, master_seed, d, data, table = args
    out = []
    for r in range(cfg.runs):
        init = RbmParams.random(cfg.visible, cfg.hidden, _stream(master_seed, 1, d, r), cfg.init_scale)
        for algo in cfg.algorithms:
            rng = _stream(master_seed, 2, d, r, ALGO_STREAMS[algo])
            final = train_one(algo, init, data, cfg, rng)
            out.append((d, r, algo, kl_divergence(table, model_visible_distribution(final))))
    return out


def make_datasets(cfg: BiasBenchConfig, master_seed: int):
    return gen_synthetic(cfg.n_distributions, cfg.samples_per_dist, cfg.visible, _stream(master_seed, 0))


def bias_experiment(cfg: BiasBenchConfig, seed: int, workers: int = 1) -> BiasResult:
    sets = make_datasets(cfg, seed)
    jobs = [(cfg, seed, d, s.dataset.samples, s.table) for d, s in enumerate(sets)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_distribution, jobs))
    else:
        chunks = [_run_distribution(j) for j in jobs]
    records = sorted(rec for chunk in chunks for rec in chunk)
    kl = {a: np.sort([x for (_, _, algo, x) in records if algo == a]) for a in cfg.algorithms}
    return BiasResult(records, kl)


def bootstrap_median_diff(a, b, rng, n_boot=2000, level=0.95):
    """Percentile bootstrap interval for median(a) - median(b)."""
    a = np.asarray(a)
    b = np.asarray(b)
    diffs = np.empty(n_boot)
    for i in range(n_boot):
        diffs[i] = np.median(rng.choice(a, a.size)) - np.median(rng.choice(b, b.size))
    lo, hi = np.quantile(diffs, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)
