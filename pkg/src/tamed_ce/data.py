"""Datasets, normalisation, holdout splits and uniform label noise."""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .core import ContractError, stream

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

# sub-stream keys under a run seed
NOISE_STREAM = 1
SPLIT_STREAM = 2
BLOBS_STREAM = 3
TEST_SPLIT_STREAM = 4


class IdxFormatError(ValueError):
    """Malformed IDX file; ``field`` names the offending part."""

    def __init__(self, path, field, detail):
        super().__init__(f"{path}: {field}: {detail}")
        self.path = path
        self.field = field


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    clean_labels: np.ndarray | None = None
    corrupted_mask: np.ndarray | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.clean_labels is None:
            self.clean_labels = self.labels.copy()
        if self.corrupted_mask is None:
            self.corrupted_mask = np.zeros(len(self.labels), dtype=bool)
        if self.images.ndim != 2 or len(self.images) != len(self.labels):
            raise ContractError(f"images {self.images.shape} do not match {len(self.labels)} labels")
        for name in ("labels", "clean_labels"):
            y = getattr(self, name)
            if y.size and (y.min() < 0 or y.max() >= self.num_classes):
                raise ContractError(f"{name} outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.num_classes,
                       self.clean_labels[idx], self.corrupted_mask[idx])


# IDX --------------------------------------------------------------------------

def _read_bytes(path: Path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(path, expected_magic: int, ndim: int) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise IdxFormatError(path, "bad magic", f"file has {len(raw)} bytes")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(path, "bad magic", f"expected 0x{expected_magic:08x}, found 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(path, "dimensions", f"header needs {header} bytes, file has {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    declared = math.prod(dims)
    actual = len(raw) - header
    if actual != declared:
        raise IdxFormatError(path, "data length", f"declared {declared} bytes, found {actual}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist_idx(images_path, labels_path, num_classes: int = 10) -> Dataset:
    """Read an IDX image/label pair (optionally gzipped); pixels scaled to [0, 1]."""
    images = _parse_idx(images_path, IMAGES_MAGIC, 3)
    labels = _parse_idx(labels_path, LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise IdxFormatError(labels_path, "sample count",
                             f"{len(images)} images but {len(labels)} labels")
    flat = images.reshape(len(images), -1).astype(np.float64) / 255.0
    if labels.size and labels.max() >= num_classes:
        raise IdxFormatError(labels_path, "label value", f"label {labels.max()} >= {num_classes}")
    return Dataset(flat, labels.astype(np.int64), num_classes)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def find_mnist(data_dir, split: str) -> tuple[Path, Path]:
    """Locate the standard IDX file pair for ``split``, gzipped or not."""
    found = []
    for stem in MNIST_FILES[split]:
        for name in (stem, stem + ".gz"):
            p = Path(data_dir) / name
            if p.exists():
                found.append(p)
                break
        else:
            raise FileNotFoundError(f"missing {Path(data_dir) / stem}[.gz]")
    return found[0], found[1]


# Synthetic blobs ---------------------------------------------------------------

def make_blobs(n_per_class: int, num_classes: int, dim: int, separation: float,
               seed: int, spread: float = 1.0) -> Dataset:
    """Isotropic Gaussian clusters at random centres at least ``separation`` apart."""
    if min(n_per_class, num_classes, dim) < 1:
        raise ContractError("n_per_class, num_classes and dim must all be >= 1")
    rng = stream(seed, BLOBS_STREAM)
    scale = separation * max(1.0, num_classes ** (1.0 / dim))
    centers = np.empty((0, dim))
    while len(centers) < num_classes:
        for _ in range(1000):
            c = rng.standard_normal(dim) * scale
            if not len(centers) or np.linalg.norm(centers - c, axis=1).min() >= separation:
                centers = np.vstack([centers, c])
                break
        else:
            scale *= 1.25
    x = np.repeat(centers, n_per_class, axis=0)
    x += spread * rng.standard_normal(x.shape)
    y = np.repeat(np.arange(num_classes), n_per_class)
    return Dataset(x, y, num_classes)


# Normalisation -----------------------------------------------------------------

def normalize(ds: Dataset, stats=None, per_feature: bool = True, std_floor: float = 1e-8):
    """Standardise features; returns ``(dataset, (means, stds))``.

    Statistics are computed on ``ds`` unless given, in which case they are
    applied verbatim (use the training split's stats for validation/test).
    With ``per_feature=False`` a single mean/std is shared by all features,
    i.e. one channel for grayscale images.
    """
    if stats is None:
        if not len(ds):
            raise ContractError("cannot compute statistics of an empty dataset")
        if per_feature:
            means = ds.images.mean(axis=0)
            stds = ds.images.std(axis=0)
        else:
            means = np.full(ds.images.shape[1], ds.images.mean())
            stds = np.full(ds.images.shape[1], ds.images.std())
        stds = np.maximum(stds, std_floor)
        stats = (means, stds)
    means, stds = stats
    return replace(ds, images=(ds.images - means) / stds), stats


# Label noise -------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    eta: float
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ContractError(f"eta must be in [0, 1], got {self.eta}")

    def count(self, n: int) -> int:
        # exact decimal floor: 0.29 * 100 is 29, not 28
        return math.floor(Fraction(str(self.eta)) * n)


def inject_noise(ds: Dataset, spec: NoiseSpec) -> Dataset:
    """Resample the labels of exactly ``floor(eta * n)`` samples uniformly over all classes.

    The corrupted subset is a seeded shuffle prefix; a resampled label may
    coincide with the original one. ``clean_labels`` is left untouched.
    """
    n = len(ds)
    k = spec.count(n)
    rng = stream(spec.seed, NOISE_STREAM)
    chosen = rng.permutation(n)[:k]
    labels = ds.labels.copy()
    labels[chosen] = rng.integers(ds.num_classes, size=k)
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    return Dataset(ds.images, labels, ds.num_classes, ds.clean_labels.copy(), mask)


def holdout_split(ds: Dataset, holdout: int, seed: int,
                  key: int = SPLIT_STREAM) -> tuple[Dataset, Dataset]:
    """Seeded disjoint split into ``(train, validation)`` with ``holdout`` validation samples.

    ``key`` selects the sub-stream, so several splits under one seed stay independent.
    """
    n = len(ds)
    if not 0 <= holdout < n:
        raise ContractError(f"holdout must be in [0, {n}), got {holdout}")
    perm = stream(seed, key).permutation(n)
    val_idx = np.sort(perm[:holdout])
    train_idx = np.sort(perm[holdout:])
    return ds.take(train_idx), ds.take(val_idx)
