"""Command-line front end: reproducible batch experiments.

Every subcommand resolves one flat configuration (defaults, then preset,
then ``--config`` file, then ``--set`` overrides, then dedicated flags),
runs a library pipeline and writes three files to the output directory:
``results.csv``, ``config.resolved.ini`` and ``manifest.json``.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import configparser
import io
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from . import hardware as hwm
from .dataio import (
    ConfigError,
    binarize,
    coerce,
    gen_synthetic,
    read_config,
    read_idx,
    write_results,
)
from .evaluation import (
    AisConfig,
    BiasBenchConfig,
    SweepSpec,
    classifier_accuracy,
    classifier_head_train,
    noise_sweep,
)
from .evaluation.ais import ais_log_partition
from .evaluation.sweep import score
from .rbm import MAX_ENUM_UNITS, RbmParams, exact_partition, hidden_conditional
from .training import TrainConfig, train

log = logging.getLogger(__name__)

OUT_DIR_ENV = "ISINGRBM_OUT_DIR"
SUBCOMMANDS = ("train", "eval-ais", "bias-bench", "noise-sweep", "classify")
ALGO_NAMES = {"cd": "CD", "gs": "GS", "bgf": "BGF", "ml": "ML"}

SCHEMA = {
    "model": {"visible": int, "hidden": int, "init_scale": float},
    "train": {"algo": str, "alpha": float, "k": int, "batch_size": int, "epochs": int,
              "p": int, "persistent": bool, "snapshot_every": int, "shuffle": bool},
    "hardware": {"variation_rms": float, "noise_rms": float, "sigmoid_gain": float,
                 "sigmoid_offset": float, "gain_variation_rms": float, "w_min": float,
                 "w_max": float, "pump_step": float, "pump_mode": str, "readout_bits": int,
                 "anneal_passes": int, "anneal_schedule": str, "anneal_t_start": float},
    "data": {"source": str, "samples": int, "images": str, "labels": str,
             "test_images": str, "test_labels": str, "limit": int, "test_limit": int,
             "binarize": str, "threshold": float},
    "ais": {"n_temps": int, "n_runs": int, "base": str},
    "bias": {"n_distributions": int, "samples_per_dist": int, "iterations": int, "runs": int,
             "algorithms": list, "alpha": float, "cd_k": int, "init_scale": float,
             "bgf_particles": int, "anneal_passes": int, "pump_mode": str},
    "sweep": {"levels": list, "grid": list},
    "classify": {"reg": float, "max_iter": int},
}

DEFAULTS = {
    "model.visible": 12, "model.hidden": 4, "model.init_scale": 0.01,
    "train.algo": "cd", "train.alpha": 0.1, "train.k": 1, "train.batch_size": 100,
    "train.epochs": 100, "train.p": 1, "train.persistent": False, "train.snapshot_every": 10,
    "train.shuffle": True,
    "hardware.variation_rms": 0.0, "hardware.noise_rms": 0.0, "hardware.sigmoid_gain": 1.0,
    "hardware.sigmoid_offset": 0.0, "hardware.gain_variation_rms": 0.0,
    "hardware.w_min": -8.0, "hardware.w_max": 8.0, "hardware.pump_step": 0.01,
    "hardware.pump_mode": "headroom", "hardware.readout_bits": 8,
    "hardware.anneal_passes": 5, "hardware.anneal_schedule": "flat",
    "hardware.anneal_t_start": 2.0,
    "data.source": "synthetic", "data.samples": 100, "data.images": "", "data.labels": "",
    "data.test_images": "", "data.test_labels": "", "data.limit": 0, "data.test_limit": 0,
    "data.binarize": "threshold", "data.threshold": 0.5,
    "ais.n_temps": 1000, "ais.n_runs": 100, "ais.base": "fitted-visible-bias",
    "bias.n_distributions": 60, "bias.samples_per_dist": 100, "bias.iterations": 1000,
    "bias.runs": 400, "bias.algorithms": ["ML", "CD-1", "BGF"], "bias.alpha": 0.1,
    "bias.cd_k": 10, "bias.init_scale": 0.01, "bias.bgf_particles": 10,
    "bias.anneal_passes": 5, "bias.pump_mode": "ideal",
    "sweep.levels": ["0.03", "0.10", "0.17", "0.24", "0.30"], "sweep.grid": [],
    "classify.reg": 1e-4, "classify.max_iter": 500,
}

PRESETS = {
    "appendix-a": {},
    "appendix-a-desk": {"bias.n_distributions": 10, "bias.runs": 40},
    "noise-grid-25": {"train.algo": "bgf", "train.batch_size": 1, "train.alpha": 0.001,
                      "train.epochs": 1000, "train.p": 10, "train.snapshot_every": 1000,
                      "sweep.levels": ["0.03", "0.10", "0.17", "0.24", "0.30"]},
    "mnist-784x200": {"model.visible": 784, "model.hidden": 200, "data.source": "idx",
                      "train.epochs": 10, "train.batch_size": 100, "train.snapshot_every": 0,
                      "ais.base": "fitted-visible-bias"},
    "mnist-784x64": {"model.visible": 784, "model.hidden": 64, "data.source": "idx",
                     "data.limit": 10000, "train.epochs": 3, "train.batch_size": 100,
                     "train.snapshot_every": 0},
}


class UsageError(Exception):
    """Bad flags or configuration: exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="isingrbm", description="Ising-substrate RBM training experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--seed", type=int, required=True, help="master seed (required)")
        p.add_argument("--config", help="INI config file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value; repeatable")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--out-dir", default=os.environ.get(OUT_DIR_ENV, "results"))
        p.add_argument("--workers", type=int, default=1)
        if name in ("train", "classify", "noise-sweep"):
            p.add_argument("--algo", choices=sorted(ALGO_NAMES))
            p.add_argument("--batch-size", type=int)
        if name == "eval-ais":
            p.add_argument("--params", help="npz written by 'train' (random model if omitted)")
    return parser


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    explicit = set()
    if args.preset:
        cfg.update(PRESETS[args.preset])
        explicit.update(PRESETS[args.preset])
    if args.config:
        from_file = read_config(args.config, SCHEMA)
        cfg.update(from_file)
        explicit.update(from_file)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        section, _, name = key.partition(".")
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise ConfigError(f"unknown config key '{key}'")
        cfg[key] = coerce(raw, SCHEMA[section][name], key)
        explicit.add(key)
    if getattr(args, "algo", None):
        cfg["train.algo"] = args.algo
    if getattr(args, "batch_size", None) is not None:
        cfg["train.batch_size"] = args.batch_size
        explicit.add("train.batch_size")
    algo = str(cfg["train.algo"]).lower()
    if algo not in ALGO_NAMES:
        raise ConfigError(f"unknown algorithm '{cfg['train.algo']}' (train.algo)")
    cfg["train.algo"] = algo
    if algo == "bgf":
        if "train.batch_size" in explicit and cfg["train.batch_size"] != 1:
            raise ConfigError("BGF updates after every sample: batch size must be 1")
        cfg["train.batch_size"] = 1
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    return cfg


def format_config(cfg: dict) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for section in SCHEMA:
        cp[section] = {}
        for key in SCHEMA[section]:
            val = cfg[f"{section}.{key}"]
            if isinstance(val, list):
                val = ", ".join(str(v) for v in val)
            elif isinstance(val, float):
                val = format(val, ".17g")
            cp[section][key] = str(val).lower() if isinstance(val, bool) else str(val)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


@dataclass
class Streams:
    """Independent generators derived from the master seed by purpose."""

    seed: int

    def rng(self, *key) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))

    def chip_seed(self) -> int:
        return int(np.random.SeedSequence(self.seed, spawn_key=(3,)).generate_state(1)[0])


def train_config(cfg, seed) -> TrainConfig:
    return TrainConfig(
        alpha=cfg["train.alpha"], k=cfg["train.k"], batch_size=cfg["train.batch_size"],
        epochs=cfg["train.epochs"], p=cfg["train.p"], persistent=cfg["train.persistent"],
        algo=ALGO_NAMES[cfg["train.algo"]], snapshot_every=cfg["train.snapshot_every"],
        shuffle=cfg["train.shuffle"], seed=seed,
    )


def hw_config(cfg, chip_seed) -> hwm.HwConfig:
    kw = {k: cfg[f"hardware.{k}"] for k in SCHEMA["hardware"]}
    return hwm.HwConfig(seed=chip_seed, **kw)


def ais_config(cfg) -> AisConfig:
    return AisConfig(n_temps=cfg["ais.n_temps"], n_runs=cfg["ais.n_runs"], base=cfg["ais.base"])


def _idx_dataset(cfg, images_key, labels_key, limit_key, rng):
    path = cfg[images_key]
    if not path:
        raise ConfigError(f"data source 'idx' needs {images_key}")
    images = read_idx(path)
    labels = read_idx(cfg[labels_key]) if cfg[labels_key] else None
    ds = binarize(images, cfg["data.binarize"], cfg["data.threshold"], rng, labels, source=path)
    limit = cfg[limit_key]
    if limit:
        ds.samples = ds.samples[:limit]
        if ds.labels is not None:
            ds.labels = ds.labels[:limit]
    return ds.samples, ds.labels


def _digits(cfg, rng):
    from sklearn.datasets import load_digits

    d = load_digits()
    pixels = np.rint(d.data * (255.0 / 16.0)).astype(np.uint8)
    order = np.random.default_rng(0).permutation(len(pixels))
    pixels, labels = pixels[order], d.target[order]
    if cfg["data.binarize"] == "threshold":
        bits = (pixels / 255.0 > cfg["data.threshold"]).astype(np.float64)
    else:
        bits = (rng.random(pixels.shape) < pixels / 255.0).astype(np.float64)
    split = len(bits) * 3 // 4
    return (bits[:split], labels[:split]), (bits[split:], labels[split:])


def load_training_data(cfg, streams: Streams):
    """(train_x, train_y, test_x, test_y); labels and test split may be None."""
    source = cfg["data.source"]
    rng = streams.rng(0)
    if source == "synthetic":
        s = gen_synthetic(1, cfg["data.samples"], cfg["model.visible"], rng)[0]
        return s.dataset.samples, None, None, None
    if source == "idx":
        x, y = _idx_dataset(cfg, "data.images", "data.labels", "data.limit", rng)
        tx = ty = None
        if cfg["data.test_images"]:
            tx, ty = _idx_dataset(cfg, "data.test_images", "data.test_labels", "data.test_limit", rng)
        return x, y, tx, ty
    if source == "digits":
        (x, y), (tx, ty) = _digits(cfg, rng)
        return x, y, tx, ty
    raise ConfigError(f"unknown data.source '{source}' (synthetic, idx or digits)")


def _check_visible(cfg, data):
    if data.shape[1] != cfg["model.visible"]:
        raise ConfigError(
            f"data rows have {data.shape[1]} bits but model.visible = {cfg['model.visible']}")


def _train(cfg, streams, data):
    init = RbmParams.random(cfg["model.visible"], cfg["model.hidden"], streams.rng(1),
                            cfg["model.init_scale"])
    tc = train_config(cfg, streams.seed)
    hc = hw_config(cfg, streams.chip_seed())
    return train(init, data, tc, hc, streams.rng(2))


def cmd_train(cfg, streams, out_dir, workers):
    data, _, _, _ = load_training_data(cfg, streams)
    _check_visible(cfg, data)
    trace = _train(cfg, streams, data)
    algo = ALGO_NAMES[cfg["train.algo"]]
    rows = []
    enumerable = cfg["model.visible"] + cfg["model.hidden"] <= MAX_ENUM_UNITS
    for it, params in trace.snapshots:
        if enumerable:
            lp, _, _ = score(params, data)
            rows.append(("train", algo, streams.seed, it, "avg_log_prob", lp))
        recon = hidden_conditional(params, data) @ params.W.T + params.b_v
        err = float(np.mean((data - 1.0 / (1.0 + np.exp(-recon))) ** 2))
        rows.append(("train", algo, streams.seed, it, "reconstruction_mse", err))
    f = trace.final
    np.savez(out_dir / "params.npz", W=f.W, b_v=f.b_v, b_h=f.b_h)
    return rows


def cmd_eval_ais(cfg, streams, out_dir, workers, params_path=None):
    if params_path:
        with np.load(params_path) as z:
            params = RbmParams(z["W"], z["b_v"], z["b_h"])
    else:
        params = RbmParams.random(cfg["model.visible"], cfg["model.hidden"], streams.rng(1),
                                  cfg["model.init_scale"])
    ac = ais_config(cfg)
    data = None
    if ac.base == "fitted-visible-bias" or cfg["data.source"] != "synthetic":
        data, _, _, _ = load_training_data(cfg, streams)
        _check_visible(cfg, data)
    log_z, err, dropped = ais_log_partition(params, ac, streams.rng(4), data=data)
    rows = [("eval-ais", "AIS", streams.seed, 0, "log_z", log_z),
            ("eval-ais", "AIS", streams.seed, 0, "log_z_stderr", err),
            ("eval-ais", "AIS", streams.seed, 0, "n_dropped", dropped)]
    if params.n_visible + params.n_hidden <= MAX_ENUM_UNITS:
        rows.append(("eval-ais", "exact", streams.seed, 0, "log_z", exact_partition(params)))
    if data is not None:
        from .evaluation import avg_log_prob

        rows.append(("eval-ais", "AIS", streams.seed, 0, "avg_log_prob", avg_log_prob(params, data, log_z)))
    return rows


def bias_config(cfg) -> BiasBenchConfig:
    hw = hwm.HwConfig.ideal(pump_mode=cfg["bias.pump_mode"], anneal_passes=cfg["bias.anneal_passes"])
    return BiasBenchConfig(
        n_distributions=cfg["bias.n_distributions"], samples_per_dist=cfg["bias.samples_per_dist"],
        visible=cfg["model.visible"], hidden=cfg["model.hidden"],
        iterations=cfg["bias.iterations"], runs=cfg["bias.runs"],
        algorithms=tuple(cfg["bias.algorithms"]), alpha=cfg["bias.alpha"], cd_k=cfg["bias.cd_k"],
        init_scale=cfg["bias.init_scale"], bgf_particles=cfg["bias.bgf_particles"], bgf_hw=hw,
    )


def cmd_bias_bench(cfg, streams, out_dir, workers):
    from .evaluation import bias_experiment

    result = bias_experiment(bias_config(cfg), streams.seed, workers=workers)
    rows = []
    for algo, rank, kl, cum in result.cdf_table():
        rows.append(("bias", algo, streams.seed, rank, "kl", kl))
        rows.append(("bias", algo, streams.seed, rank, "cdf", cum))
    for algo in sorted(result.kl):
        rows.append(("bias", algo, streams.seed, 0, "median_kl", result.median(algo)))
    return rows


def sweep_grid(cfg):
    if cfg["sweep.grid"]:
        grid = []
        for item in cfg["sweep.grid"]:
            parts = item.split(":")
            if len(parts) != 2:
                raise ConfigError(f"sweep.grid entries are VARIATION:NOISE, got {item!r}")
            grid.append((coerce(parts[0], float, "sweep.grid"), coerce(parts[1], float, "sweep.grid")))
        return grid
    levels = [coerce(x, float, "sweep.levels") for x in cfg["sweep.levels"]]
    return [(v, n) for v in levels for n in levels]


def cmd_noise_sweep(cfg, streams, out_dir, workers):
    data, _, _, _ = load_training_data(cfg, streams)
    _check_visible(cfg, data)
    init = RbmParams.random(cfg["model.visible"], cfg["model.hidden"], streams.rng(1),
                            cfg["model.init_scale"])
    spec = SweepSpec(data=data, init=init, train=train_config(cfg, streams.seed),
                     hw=hw_config(cfg, 0), seed=streams.seed, ais=ais_config(cfg))
    algo = ALGO_NAMES[cfg["train.algo"]]
    rows = []
    for point in noise_sweep(sweep_grid(cfg), spec, workers=workers):
        exp = f"noise-sweep:v={point.variation_rms:g}:n={point.noise_rms:g}"
        for it, value in point.report.trajectory:
            rows.append((exp, algo, streams.seed, it, "avg_log_prob", value))
        for it, value in point.smoothed:
            rows.append((exp, algo, streams.seed, it, "avg_log_prob_ma10", value))
        last = point.report.trajectory[-1][0]
        rows.append((exp, algo, streams.seed, last, "log_z", point.report.log_z))
        rows.append((exp, algo, streams.seed, last, "log_z_stderr", point.report.log_z_stderr))
    return rows


def cmd_classify(cfg, streams, out_dir, workers):
    x, y, tx, ty = load_training_data(cfg, streams)
    if y is None:
        raise ConfigError("classify needs labelled data (data.source = idx with labels, or digits)")
    if tx is None or ty is None:
        raise ConfigError("classify needs a labelled test split (data.test_images/test_labels)")
    _check_visible(cfg, x)
    trace = _train(cfg, streams, x)
    params = trace.final
    head = classifier_head_train(hidden_conditional(params, x), y, reg=cfg["classify.reg"],
                                 max_iter=cfg["classify.max_iter"])
    algo = ALGO_NAMES[cfg["train.algo"]]
    it = trace.iterations[-1]
    return [
        ("classify", algo, streams.seed, it, "train_accuracy",
         classifier_accuracy(head, hidden_conditional(params, x), y)),
        ("classify", algo, streams.seed, it, "test_accuracy",
         classifier_accuracy(head, hidden_conditional(params, tx), ty)),
    ]


COMMANDS = {
    "train": cmd_train,
    "eval-ais": cmd_eval_ais,
    "bias-bench": cmd_bias_bench,
    "noise-sweep": cmd_noise_sweep,
    "classify": cmd_classify,
}


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        train_config(cfg, args.seed)
        hw_config(cfg, 0)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"isingrbm: error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out_dir)
    started = time.time()
    t0 = time.perf_counter()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.resolved.ini").write_text(format_config(cfg))
        streams = Streams(args.seed)
        extra = {"params_path": args.params} if args.command == "eval-ais" else {}
        rows = COMMANDS[args.command](cfg, streams, out_dir, args.workers, **extra)
        write_results(out_dir / "results.csv", rows)
    except ConfigError as exc:
        print(f"isingrbm: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"isingrbm: {args.command} failed: {msg}", file=sys.stderr)
        return 1
    manifest = {
        "command": args.command,
        "argv": argv,
        "seed": args.seed,
        "preset": args.preset,
        "workers": args.workers,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "versions": _versions(),
        "started_unix": started,
        "elapsed_seconds": time.perf_counter() - t0,
        "outputs": ["results.csv", "config.resolved.ini"],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 0


def main():
    logging.basicConfig(level=os.environ.get("ISINGRBM_LOG", "WARNING"))
    sys.exit(run())


if __name__ == "__main__":
    main()
