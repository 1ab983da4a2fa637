import struct

import numpy as np
import pytest

from nm_sparse_kit.data import (
    IDX_IMAGE_MAGIC,
    IDX_LABEL_MAGIC,
    DatasetHandle,
    DatasetKind,
    generate_synthetic,
    load_idx,
    load_idx_images,
    load_idx_labels,
    save_idx_images,
    save_idx_labels,
)
from nm_sparse_kit.training import Strategy, TrainConfig, evaluate_accuracy, init_layers, train
from nm_sparse_kit.tensorops import NmPattern


class TestGenerateSynthetic:
    def test_shapes_and_balance(self):
        data = generate_synthetic(classes=3, dim=8, per_class=10, spread=0.1, seed=0)
        assert data.kind is DatasetKind.SYNTHETIC_BLOBS
        assert data.x_train.shape == (30, 8)
        assert data.test_count == 30
        assert np.bincount(data.y_train).tolist() == [10, 10, 10]

    def test_same_seed_bit_identical(self):
        a = generate_synthetic(2, 8, 100, 0.1, seed=5)
        b = generate_synthetic(2, 8, 100, 0.1, seed=5)
        assert a.x_train.tobytes() == b.x_train.tobytes()
        assert a.x_test.tobytes() == b.x_test.tobytes()

    def test_tight_blobs_are_learnable_by_dense_mlp(self):
        data = generate_synthetic(2, 8, 100, 0.1, seed=1)
        cfg = TrainConfig(epochs=15, batch_size=25, warmup_epochs=1, peak_lr=0.1,
                          weight_decay=0.0, seed=1, delta_t=10**9)
        layers = init_layers([8, 16, 2], NmPattern(2, 4), Strategy.DENSE, seed=1)
        layers, _ = train(layers, data, cfg)
        assert evaluate_accuracy(layers, data.x_train, data.y_train) >= 0.99

    def test_huge_spread_approaches_chance(self):
        data = generate_synthetic(4, 8, 50, spread=100.0, seed=2)
        cfg = TrainConfig(epochs=10, batch_size=25, warmup_epochs=1, peak_lr=0.05,
                          weight_decay=0.0, seed=2, delta_t=10**9)
        layers = init_layers([8, 16, 4], NmPattern(2, 4), Strategy.DENSE, seed=2)
        layers, _ = train(layers, data, cfg)
        assert evaluate_accuracy(layers, data.x_test, data.y_test) <= 0.25 + 0.1

    @pytest.mark.parametrize("kwargs", [
        {"classes": 0, "dim": 8, "per_class": 1, "spread": 0.1},
        {"classes": 1, "dim": 8, "per_class": 0, "spread": 0.1},
        {"classes": 1, "dim": 8, "per_class": 1, "spread": 0.0},
    ])
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ValueError):
            generate_synthetic(seed=0, **kwargs)


def make_fixture(tmp_path, count=4, rows=3, cols=2):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(count, rows, cols), dtype=np.uint8)
    labels = rng.integers(0, 3, size=count, dtype=np.uint8)
    images_path = tmp_path / "imgs"
    labels_path = tmp_path / "labels"
    save_idx_images(images_path, images)
    save_idx_labels(labels_path, labels)
    return images_path, labels_path, images, labels


class TestIdx:
    def test_round_trip_exact_pixels(self, tmp_path):
        images_path, labels_path, images, labels = make_fixture(tmp_path)
        data = load_idx(images_path, labels_path)
        assert data.kind is DatasetKind.IDX_PAIR
        assert data.input_dim == 6
        expected = images.reshape(4, -1).astype(np.float64) / 255.0
        assert np.array_equal(data.x_train, expected)
        assert np.array_equal(data.y_train, labels)

    def test_reserialization_is_byte_exact(self, tmp_path):
        images_path, labels_path, images, labels = make_fixture(tmp_path)
        save_idx_images(tmp_path / "imgs2", load_idx_images(images_path))
        save_idx_labels(tmp_path / "labels2", load_idx_labels(labels_path))
        assert (tmp_path / "imgs2").read_bytes() == images_path.read_bytes()
        assert (tmp_path / "labels2").read_bytes() == labels_path.read_bytes()

    def test_magic_mismatch(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">iiii", 1234, 1, 1, 1) + b"\x00")
        with pytest.raises(ValueError, match="magic number mismatch"):
            load_idx_images(path)
        with pytest.raises(ValueError, match="magic number mismatch"):
            load_idx_labels(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short"
        path.write_bytes(b"\x00\x00")
        with pytest.raises(ValueError, match="truncated.*expected 4 bytes, file has 2"):
            load_idx_images(path)

    def test_truncated_pixels(self, tmp_path):
        path = tmp_path / "trunc"
        path.write_bytes(struct.pack(">iiii", IDX_IMAGE_MAGIC, 2, 2, 2) + b"\x00" * 5)
        with pytest.raises(ValueError, match="truncated image data: expected 24 bytes"):
            load_idx_images(path)

    def test_count_mismatch(self, tmp_path):
        images_path, labels_path, _, _ = make_fixture(tmp_path)
        bad_labels = tmp_path / "bad_labels"
        bad_labels.write_bytes(struct.pack(">ii", IDX_LABEL_MAGIC, 2) + b"\x00\x01")
        with pytest.raises(ValueError, match="count mismatch"):
            load_idx(images_path, bad_labels)


class TestDatasetHandle:
    def test_validates_feature_dim(self):
        with pytest.raises(ValueError, match="features"):
            DatasetHandle(DatasetKind.SYNTHETIC_BLOBS, 4, 2, np.zeros((3, 5)), np.zeros(3, dtype=int))

    def test_validates_label_range(self):
        with pytest.raises(ValueError, match="labels"):
            DatasetHandle(DatasetKind.SYNTHETIC_BLOBS, 4, 2, np.zeros((3, 4)),
                          np.array([0, 1, 2]))
