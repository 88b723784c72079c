"""Dataset ingestion and experiment plumbing.

IDX is the big-endian container used by MNIST-family datasets::

    bytes 0-1   0x00 0x00
    byte  2     element type (only 0x08, unsigned byte, is accepted)
    byte  3     number of dimensions D
    4*D bytes   big-endian uint32 sizes
    payload     prod(sizes) bytes, row-major
"""
from __future__ import annotations

import configparser
import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_UBYTE = 0x08
CSV_COLUMNS = ("experiment", "algo", "seed", "iteration", "metric", "value")


class IdxFormatError(ValueError):
    """Malformed IDX file; the message names the byte offset."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTypeError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class IdxTensor:
    dims: tuple
    elements: np.ndarray  # uint8, flat, row-major

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if not 1 <= len(self.dims) <= 3:
            raise ValueError(f"IDX tensors have 1 to 3 dimensions, got {len(self.dims)}")
        self.elements = np.asarray(self.elements, dtype=np.uint8).reshape(-1)
        if self.elements.size != int(np.prod(self.dims)):
            raise ValueError("element count does not match dims")

    def array(self) -> np.ndarray:
        return self.elements.reshape(self.dims)


@dataclass
class BinaryDataset:
    samples: np.ndarray  # T x M float64 of 0/1
    labels: np.ndarray = None
    source: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-D array")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape[0] != self.samples.shape[0]:
                raise ValueError("labels length does not match the number of samples")

    def __len__(self):
        return self.samples.shape[0]


def parse_idx(buf: bytes) -> IdxTensor:
    if len(buf) < 4:
        raise IdxTruncatedError(f"header truncated at byte offset {len(buf)} (need 4 bytes)")
    if buf[0] != 0 or buf[1] != 0:
        raise IdxMagicError(f"bad magic at byte offset 0: expected 00 00, got {buf[0]:02x} {buf[1]:02x}")
    if buf[2] != IDX_UBYTE:
        raise IdxTypeError(f"unsupported element type 0x{buf[2]:02x} at byte offset 2 (only 0x08 is supported)")
    ndim = buf[3]
    if not 1 <= ndim <= 3:
        raise IdxFormatError(f"unsupported dimension count {ndim} at byte offset 3")
    header_end = 4 + 4 * ndim
    if len(buf) < header_end:
        raise IdxTruncatedError(f"dimension sizes truncated at byte offset {len(buf)} (need {header_end} bytes)")
    dims = struct.unpack(f">{ndim}I", buf[4:header_end])
    count = int(np.prod(dims))
    end = header_end + count
    if len(buf) < end:
        raise IdxTruncatedError(f"payload truncated at byte offset {len(buf)} (expected {end} bytes)")
    if len(buf) > end:
        raise IdxFormatError(f"{len(buf) - end} trailing bytes after payload at byte offset {end}")
    return IdxTensor(dims, np.frombuffer(buf, dtype=np.uint8, count=count, offset=header_end))


def read_idx(path) -> IdxTensor:
    return parse_idx(Path(path).read_bytes())


def format_idx(tensor: IdxTensor) -> bytes:
    header = bytes([0, 0, IDX_UBYTE, len(tensor.dims)]) + struct.pack(f">{len(tensor.dims)}I", *tensor.dims)
    return header + tensor.elements.astype(np.uint8).tobytes()


def write_idx(path, tensor: IdxTensor) -> None:
    Path(path).write_bytes(format_idx(tensor))


def binarize(images: IdxTensor, mode: str = "threshold", threshold: float = 0.5, rng=None,
             labels=None, source: str = "") -> BinaryDataset:
    """Flatten each image to a bit row.

    ``threshold``: bit = pixel/255 > threshold. ``stochastic``: bit ~
    Bernoulli(pixel/255), one uniform per pixel from ``rng``.
    """
    arr = images.array()
    rows = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)
    intensity = rows.astype(np.float64) / 255.0
    if mode == "threshold":
        bits = intensity > threshold
    elif mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic binarization needs an rng")
        bits = rng.random(intensity.shape) < intensity
    else:
        raise ValueError(f"unknown binarization mode {mode!r}")
    if labels is not None and isinstance(labels, IdxTensor):
        labels = labels.elements.astype(np.int64)
    return BinaryDataset(bits.astype(np.float64), labels, source)


@dataclass(frozen=True)
class SyntheticSet:
    dataset: BinaryDataset
    bit_probs: np.ndarray
    table: np.ndarray  # empirical distribution over all 2^M states


def gen_synthetic(n_distributions: int, samples_per_dist: int, visible: int, rng) -> list:
    """Random training sets from product-of-Bernoulli sources.

    Each source draws per-bit probabilities uniformly in [0.1, 0.9]; the
    returned table is the empirical distribution of the drawn samples.
    """
    from .rbm import MAX_ENUM_UNITS, state_index

    if visible > MAX_ENUM_UNITS:
        raise ValueError(f"visible={visible} exceeds the enumeration guard")
    out = []
    for d in range(n_distributions):
        probs = rng.uniform(0.1, 0.9, size=visible)
        samples = (rng.random((samples_per_dist, visible)) < probs).astype(np.float64)
        counts = np.bincount(state_index(samples), minlength=2**visible)
        out.append(SyntheticSet(BinaryDataset(samples, source=f"synthetic[{d}]"), probs,
                                counts / samples_per_dist))
    return out


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_results(path, rows, columns=CSV_COLUMNS) -> None:
    """Write rows (mappings or sequences) as CSV with a fixed header; floats at 17 digits."""
    path = Path(path)
    try:
        f = path.open("w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror}") from exc
    with f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row[c] for c in columns]
            w.writerow([_fmt(x) for x in row])


def read_results(path, columns=CSV_COLUMNS) -> list:
    """Read a results CSV back; numeric-looking fields become int or float."""
    def conv(s):
        for t in (int, float):
            try:
                return t(s)
            except ValueError:
                pass
        return s

    with Path(path).open(newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if tuple(header) != tuple(columns):
            raise ValueError(f"unexpected CSV header {header}")
        return [dict(zip(header, (conv(x) for x in row))) for row in r]


def read_config(path_or_text, schema: dict, from_text: bool = False) -> dict:
    """Parse an INI-style config against ``schema``.

    ``schema`` maps section -> {key: type}. Unknown sections and keys are
    rejected with their name in the message; missing keys are filled from
    nothing, so callers merge the result over their defaults.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        if from_text:
            cp.read_string(path_or_text)
        else:
            with open(path_or_text) as f:
                cp.read_file(f)
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    out = {}
    for section in cp.sections():
        if section not in schema:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in schema[section]:
                raise ConfigError(f"unknown config key '{key}' in section [{section}]")
            out[f"{section}.{key}"] = coerce(raw, schema[section][key], f"{section}.{key}")
    return out


def coerce(raw: str, typ, name: str):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is list:
            return [x.strip() for x in raw.split(",") if x.strip()]
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for '{name}' (expected {typ.__name__})") from exc
