"""Dataset handles: synthetic Gaussian blobs and IDX-format image/label pairs."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class DatasetKind(Enum):
    SYNTHETIC_BLOBS = "synthetic"
    IDX_PAIR = "idx"


@dataclass
class DatasetHandle:
    kind: DatasetKind
    input_dim: int
    num_classes: int
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    y_test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        for x, y, split in ((self.x_train, self.y_train, "train"), (self.x_test, self.y_test, "test")):
            if len(y) == 0:
                continue
            if x.shape != (len(y), self.input_dim):
                raise ValueError(f"{split} features have shape {x.shape}, expected ({len(y)}, {self.input_dim})")
            if y.min() < 0 or y.max() >= self.num_classes:
                raise ValueError(f"{split} labels fall outside [0, {self.num_classes})")

    @property
    def train_count(self) -> int:
        return len(self.y_train)

    @property
    def test_count(self) -> int:
        return len(self.y_test)


def generate_synthetic(
    classes: int, dim: int, per_class: int, spread: float, seed: int
) -> DatasetHandle:
    """Balanced isotropic Gaussian blobs around unit-norm random class centers.

    Produces equally sized train and test splits, bit-reproducible for a
    given seed.
    """
    if classes < 1 or dim < 1 or per_class < 1:
        raise ValueError("classes, dim and per_class must all be >= 1")
    if spread <= 0:
        raise ValueError(f"spread must be positive, got {spread}")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    def draw():
        xs, ys = [], []
        for c in range(classes):
            xs.append(centers[c] + spread * rng.normal(size=(per_class, dim)))
            ys.append(np.full(per_class, c, dtype=np.int64))
        return np.concatenate(xs), np.concatenate(ys)

    x_train, y_train = draw()
    x_test, y_test = draw()
    return DatasetHandle(DatasetKind.SYNTHETIC_BLOBS, dim, classes, x_train, y_train, x_test, y_test)


def _read_be32(data: bytes, offset: int, path, what: str) -> int:
    if len(data) < offset + 4:
        raise ValueError(f"{path}: truncated {what}: expected {offset + 4} bytes, file has {len(data)}")
    return struct.unpack_from(">i", data, offset)[0]


def load_idx_images(path) -> np.ndarray:
    """Images from an IDX3 ubyte file as a (count, rows, cols) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = _read_be32(data, 0, path, "header")
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(f"{path}: magic number mismatch: expected {IDX_IMAGE_MAGIC}, got {magic}")
    count = _read_be32(data, 4, path, "header")
    rows = _read_be32(data, 8, path, "header")
    cols = _read_be32(data, 12, path, "header")
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise ValueError(f"{path}: truncated image data: expected {expected} bytes, file has {len(data)}")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    """Labels from an IDX1 ubyte file as a (count,) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = _read_be32(data, 0, path, "header")
    if magic != IDX_LABEL_MAGIC:
        raise ValueError(f"{path}: magic number mismatch: expected {IDX_LABEL_MAGIC}, got {magic}")
    count = _read_be32(data, 4, path, "header")
    expected = 8 + count
    if len(data) != expected:
        raise ValueError(f"{path}: truncated label data: expected {expected} bytes, file has {len(data)}")
    return np.frombuffer(data, dtype=np.uint8, offset=8)


def save_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, count, rows, cols))
        fh.write(images.tobytes())


def save_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", IDX_LABEL_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def load_idx(images_path, labels_path) -> DatasetHandle:
    """An IDX image/label pair as a flattened dataset with pixels in [0, 1]."""
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise ValueError(
            f"count mismatch: {images_path} has {len(images)} images but "
            f"{labels_path} has {len(labels)} labels"
        )
    flat = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return DatasetHandle(
        DatasetKind.IDX_PAIR,
        flat.shape[1],
        int(labels.max()) + 1 if len(labels) else 0,
        flat,
        labels.astype(np.int64),
    )
