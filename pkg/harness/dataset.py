"""
Dataset ingestion: IDX image/label files, a CSV fallback and an offline
synthetic generator. Images come out as float64 (N, 1, H, W), normalized
with statistics of the training split.
"""

import csv
import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from core.errors import DatasetFormatError, require

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
NUM_CLASSES = 10
IMAGE_SIZE = 28

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, 1, H, W)
    labels: np.ndarray  # (N,) int64

    def __len__(self) -> int:
        return self.labels.shape[0]

    def take(self, count: int) -> "Dataset":
        return Dataset(self.images[:count], self.labels[:count])


@dataclass(frozen=True)
class Normalizer:
    mean: float
    std: float

    @classmethod
    def fit(cls, images: np.ndarray) -> "Normalizer":
        std = float(images.std())
        return cls(float(images.mean()), std if std > 0 else 1.0)

    def transform(self, images: np.ndarray) -> np.ndarray:
        return (images - self.mean) / self.std


@dataclass(frozen=True)
class DatasetSplits:
    train: Dataset
    test: Dataset
    normalizer: Normalizer


# ============= IDX =============


def _read_bytes(path: PathLike) -> bytes:
    data = Path(path).read_bytes()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _read_idx(path: PathLike, magic: int, ndim: int) -> np.ndarray:
    data = _read_bytes(path)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise DatasetFormatError(str(path), f"file too short for a {ndim}-d IDX header", offset=len(data))
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise DatasetFormatError(str(path), f"bad magic 0x{found:08x}, expected 0x{magic:08x}", offset=0)
    dims = struct.unpack(f">{ndim}I", data[4:header])
    size = int(np.prod(dims))
    if len(data) - header < size:
        raise DatasetFormatError(
            str(path), f"payload truncated: expected {size} bytes, found {len(data) - header}", offset=len(data)
        )
    if len(data) - header > size:
        raise DatasetFormatError(str(path), "trailing bytes after payload", offset=header + size)
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def read_idx_images(path: PathLike) -> np.ndarray:
    """uint8 images (N, rows, cols)."""
    return _read_idx(path, IDX_IMAGES_MAGIC, 3)


def read_idx_labels(path: PathLike) -> np.ndarray:
    return _read_idx(path, IDX_LABELS_MAGIC, 1)


def _write_idx(path: PathLike, magic: int, array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    array = np.asarray(array)
    require(array.dtype == np.uint8, f"IDX payload must be uint8, got {array.dtype}")
    data = struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()
    if path.suffix == ".gz":
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)
    return path


def write_idx_images(path: PathLike, images: np.ndarray) -> Path:
    require(np.asarray(images).ndim == 3, "IDX images must be (N, rows, cols)")
    return _write_idx(path, IDX_IMAGES_MAGIC, images)


def write_idx_labels(path: PathLike, labels: np.ndarray) -> Path:
    require(np.asarray(labels).ndim == 1, "IDX labels must be one-dimensional")
    return _write_idx(path, IDX_LABELS_MAGIC, labels)


def load_idx(images_path: PathLike, labels_path: PathLike) -> Dataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(
            str(labels_path), f"{labels.shape[0]} labels for {images.shape[0]} images", offset=4
        )
    return Dataset(images[:, None].astype(np.float64), labels.astype(np.int64))


# ============= CSV =============


def load_csv(path: PathLike, image_size: int = IMAGE_SIZE) -> Dataset:
    """Rows of `label, pixel_0 ... pixel_{size*size-1}`, pixels in 0..255."""
    expected = 1 + image_size * image_size
    labels, pixels = [], []
    with open(path, newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            if len(row) != expected:
                raise DatasetFormatError(str(path), f"expected {expected} fields, found {len(row)}", line=line_no)
            try:
                values = [int(v) for v in row]
            except ValueError:
                raise DatasetFormatError(str(path), "non-integer field", line=line_no)
            if not all(0 <= v <= 255 for v in values[1:]):
                raise DatasetFormatError(str(path), "pixel outside 0..255", line=line_no)
            labels.append(values[0])
            pixels.append(values[1:])
    if not labels:
        raise DatasetFormatError(str(path), "no rows", line=1)
    images = np.asarray(pixels, dtype=np.float64).reshape(-1, 1, image_size, image_size)
    return Dataset(images, np.asarray(labels, dtype=np.int64))


def write_csv(path: PathLike, dataset: Dataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for image, label in zip(dataset.images, dataset.labels):
            writer.writerow([int(label), *image.reshape(-1).astype(np.uint8).tolist()])
    return path


# ============= Synthetic =============


def synthetic_dataset(
    count: int, seed: int, num_classes: int = NUM_CLASSES, image_size: int = IMAGE_SIZE, noise: float = 48.0
) -> Dataset:
    """
    Balanced set of noisy class prototypes in pixel units (0..255).

    Prototypes depend only on the class count and image size, so train and
    test sets drawn with different seeds share them.
    """
    require(count > 0, "synthetic dataset needs at least one example")
    proto_rng = np.random.default_rng([num_classes, image_size])
    coarse = proto_rng.uniform(0.0, 255.0, size=(num_classes, 7, 7))
    reps = -(-image_size // 7)
    prototypes = np.kron(coarse, np.ones((reps, reps)))[:, :image_size, :image_size]

    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(count) % num_classes)
    images = prototypes[labels] + rng.normal(0.0, noise, size=(count, image_size, image_size))
    images = np.clip(np.rint(images), 0, 255)
    return Dataset(images[:, None].astype(np.float64), labels.astype(np.int64))


# ============= Splits and batching =============


def load_dataset(path: PathLike, format: str, labels_path: Optional[PathLike] = None) -> Dataset:
    """Raw (unnormalized) examples in deterministic file order."""
    if format == "idx":
        require(labels_path is not None, "IDX datasets need a labels file")
        return load_idx(path, labels_path)
    if format == "csv":
        return load_csv(path)
    raise DatasetFormatError(str(path), f"unsupported dataset format '{format}'")


def _validate(dataset: Dataset, name: str) -> None:
    require(len(dataset) > 0, f"{name} split is empty")
    require(
        bool(np.all((dataset.labels >= 0) & (dataset.labels < NUM_CLASSES))),
        f"{name} labels must lie in [0, {NUM_CLASSES})",
    )


def load_splits(data, seed: int) -> DatasetSplits:
    """
    Train and test splits per the data settings, normalized with training statistics.

    Args:
        data: DataSettings
        seed: Experiment seed (synthetic data only)
    """
    if data.format == "synthetic":
        train = synthetic_dataset(data.synthetic_train, seed, noise=data.synthetic_noise)
        test = synthetic_dataset(data.synthetic_test, seed + 1_000_003, noise=data.synthetic_noise)
    elif data.format == "idx":
        require(data.train_images and data.train_labels, "idx format needs train_images and train_labels")
        require(data.test_images and data.test_labels, "idx format needs test_images and test_labels")
        train = load_idx(data.train_images, data.train_labels)
        test = load_idx(data.test_images, data.test_labels)
    else:
        require(data.train_csv and data.test_csv, "csv format needs train_csv and test_csv")
        train = load_csv(data.train_csv)
        test = load_csv(data.test_csv)
    if data.max_train_examples is not None:
        train = train.take(data.max_train_examples)
    _validate(train, "train")
    _validate(test, "test")

    normalizer = Normalizer.fit(train.images)
    logger.info(
        "loaded %d train / %d test examples (%s), mean=%.3f std=%.3f",
        len(train),
        len(test),
        data.format,
        normalizer.mean,
        normalizer.std,
    )
    return DatasetSplits(
        Dataset(normalizer.transform(train.images), train.labels),
        Dataset(normalizer.transform(test.images), test.labels),
        normalizer,
    )


def iterate_minibatches(
    dataset: Dataset, batch_size: int, seed: int, epoch: int
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Shuffled minibatches; the order depends only on (seed, epoch)."""
    require(batch_size > 0, "batch_size must be positive")
    order = np.random.default_rng([seed, epoch]).permutation(len(dataset))
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        yield dataset.images[idx], dataset.labels[idx]


def steps_per_epoch(dataset: Dataset, batch_size: int) -> int:
    return -(-len(dataset) // batch_size)
