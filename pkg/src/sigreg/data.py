"""Dataset ingestion: synthetic Gaussian-class generators and the standard
CIFAR binary record format."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError
from .rng import RngStream

CIFAR_PIXELS = 3072  # 3 x 32 x 32
_CIFAR_VARIANTS = {
    # variant -> (record size, label byte offset within record, num classes)
    "cifar10": (1 + CIFAR_PIXELS, 0, 10),
    "cifar100": (2 + CIFAR_PIXELS, 1, 100),  # coarse byte then fine byte
}
_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Normalization:
    """Record of the affine normalization applied to raw features.

    apply:  x_norm = (raw / pixel_scale - mean) / std
    invert: raw    = (x_norm * std + mean) * pixel_scale
    """

    mean: np.ndarray
    std: np.ndarray
    pixel_scale: float = 1.0

    @classmethod
    def fit(cls, raw: np.ndarray, pixel_scale: float = 1.0) -> "Normalization":
        scaled = np.asarray(raw, dtype=np.float64) / pixel_scale
        std = scaled.std(axis=0)
        return cls(
            mean=scaled.mean(axis=0),
            std=np.maximum(std, _STD_FLOOR),
            pixel_scale=pixel_scale,
        )

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=np.float64) / self.pixel_scale - self.mean) / self.std

    def invert(self, normalized: np.ndarray) -> np.ndarray:
        return (np.asarray(normalized, dtype=np.float64) * self.std + self.mean) * self.pixel_scale


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix plus integer class labels."""

    features: np.ndarray  # (M, D) float64
    labels: np.ndarray  # (M,) int64
    num_classes: int
    name: str
    normalization: Normalization | None = None

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ConfigError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ConfigError(
                f"labels length {self.labels.shape} does not match "
                f"{self.features.shape[0]} rows"
            )
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            raise ConfigError(
                f"label {int(self.labels.max())} >= num_classes {self.num_classes}"
            )

    def __len__(self) -> int:
        return self.features.shape[0]


def synth_gaussian_classes(
    rng: RngStream,
    num_classes: int,
    per_class: int,
    dim: int,
    spread: float,
) -> Dataset:
    """Gaussian blobs: class means ~ N(0, spread^2 I), samples ~ N(mean, I).

    spread controls class separability; spread=0 makes the classes
    indistinguishable (Bayes accuracy 1/num_classes).  Rows are ordered
    class-major; shuffling is the batch iterator's job.
    """
    if num_classes < 1 or per_class < 1 or dim < 1:
        raise ConfigError("num_classes, per_class and dim must all be >= 1")
    if spread < 0:
        raise ConfigError(f"spread must be >= 0, got {spread}")
    means = rng.child("means").normal((num_classes, dim)) * spread
    noise = rng.child("samples").normal((num_classes * per_class, dim))
    features = noise + np.repeat(means, per_class, axis=0)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    return Dataset(
        features=features,
        labels=labels,
        num_classes=num_classes,
        name=f"synth-gaussian-c{num_classes}-n{per_class}-d{dim}-s{spread:g}",
    )


def split_per_class(ds: Dataset, train_per_class: int) -> tuple[Dataset, Dataset]:
    """Split a class-major synthetic dataset into train/test by row blocks."""
    per_class = len(ds) // ds.num_classes
    if not 0 < train_per_class < per_class:
        raise ConfigError(
            f"train_per_class must be in (0, {per_class}), got {train_per_class}"
        )
    train_idx = []
    test_idx = []
    for c in range(ds.num_classes):
        start = c * per_class
        train_idx.extend(range(start, start + train_per_class))
        test_idx.extend(range(start + train_per_class, start + per_class))
    mk = lambda idx, tag: Dataset(
        features=ds.features[idx],
        labels=ds.labels[idx],
        num_classes=ds.num_classes,
        name=f"{ds.name}-{tag}",
        normalization=ds.normalization,
    )
    return mk(train_idx, "train"), mk(test_idx, "test")


def normalize_dataset(ds: Dataset, record: Normalization | None = None) -> Dataset:
    """Apply (or fit then apply) per-column zero-mean/unit-std normalization."""
    if record is None:
        record = Normalization.fit(ds.features)
    return Dataset(
        features=record.apply(ds.features),
        labels=ds.labels,
        num_classes=ds.num_classes,
        name=ds.name,
        normalization=record,
    )


def load_cifar_binary(
    path: str | Path,
    variant: str,
    limit: int | None = None,
    normalization: Normalization | None = None,
) -> Dataset:
    """Load a CIFAR binary file (cifar10: label + 3072 pixel bytes per
    record; cifar100: coarse label, fine label, 3072 pixel bytes).

    Pixels are scaled to [0, 1] and then normalized per column, either with
    the supplied record (e.g. train-split statistics for a test file) or
    with statistics fit on this file's own data.  ``limit`` keeps the first
    records only.  An empty file yields an empty, unnormalized dataset.
    """
    if variant not in _CIFAR_VARIANTS:
        raise ConfigError(f"unknown CIFAR variant {variant!r}")
    record_size, label_offset, num_classes = _CIFAR_VARIANTS[variant]
    raw = Path(path).read_bytes()
    if len(raw) % record_size != 0:
        valid = (len(raw) // record_size) * record_size
        raise DataFormatError(
            f"{path}: length {len(raw)} is not a multiple of the {record_size}-byte "
            f"record; partial record starts at byte {valid}"
        )
    n_records = len(raw) // record_size
    if limit is not None:
        n_records = min(n_records, limit)
    if n_records == 0:
        return Dataset(
            features=np.zeros((0, CIFAR_PIXELS)),
            labels=np.zeros(0, dtype=np.int64),
            num_classes=num_classes,
            name=variant,
        )
    records = np.frombuffer(
        raw, dtype=np.uint8, count=n_records * record_size
    ).reshape(n_records, record_size)
    labels = records[:, label_offset].astype(np.int64)
    pixels = records[:, record_size - CIFAR_PIXELS :].astype(np.float64)
    if normalization is None:
        normalization = Normalization.fit(pixels, pixel_scale=255.0)
    return Dataset(
        features=normalization.apply(pixels),
        labels=labels,
        num_classes=num_classes,
        name=variant,
        normalization=normalization,
    )


def batch_iterator(ds: Dataset, batch_size: int, rng: RngStream):
    """One epoch of shuffled (features, labels) batches.

    The permutation is drawn from ``rng`` at call time, so feeding the same
    stream state reproduces the same order.  The final short batch is
    dropped: the covariance divisor and loss magnitudes then never
    fluctuate with batch size within a run.
    """
    if batch_size < 2:
        raise ConfigError(f"batch_size must be >= 2, got {batch_size}")
    perm = rng.permutation(len(ds))
    for i in range(len(ds) // batch_size):
        idx = perm[i * batch_size : (i + 1) * batch_size]
        yield ds.features[idx], ds.labels[idx]
