"""
Tests for IDX ingestion, the synthetic two-class set and batching.
"""
import gzip
import struct

import numpy as np
import pytest
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.errors import ConfigurationError, IngestionError
from app.services import experiment
from app.services.dataset import (
    Dataset,
    batches,
    load_idx,
    load_mnist,
    mnist_available,
    subset,
    synth_twoclass,
    write_idx,
)
from app.services.experiment import parse_run_config


@pytest.fixture
def tiny_dataset():
    rng = np.random.default_rng(0)
    levels = rng.integers(0, 256, size=(6, 4, 4))
    return Dataset(
        images=(levels / 255.0).astype(np.float32),
        labels=np.array([0, 1, 2, 9, 5, 3]),
        classes=10,
    )


def _write_mnist(directory: Path, dataset: Dataset, gz: bool = False) -> None:
    suffix = ".gz" if gz else ""
    for split in ("train", "t10k"):
        write_idx(
            dataset,
            directory / f"{split}-images-idx3-ubyte{suffix}",
            directory / f"{split}-labels-idx1-ubyte{suffix}",
        )


class TestIdx:
    """Tests for load_idx and write_idx."""

    def test_round_trip(self, tmp_path, tiny_dataset):
        """Should read back the pixels and labels it wrote."""
        write_idx(tiny_dataset, tmp_path / "img", tmp_path / "lbl")
        loaded = load_idx(tmp_path / "img", tmp_path / "lbl")
        assert len(loaded) == 6
        assert loaded.image_shape == (4, 4)
        np.testing.assert_array_equal(loaded.labels, tiny_dataset.labels)
        np.testing.assert_allclose(loaded.images, tiny_dataset.images, atol=1e-6)

    def test_gzip(self, tmp_path, tiny_dataset):
        """Should read gzip-compressed files."""
        write_idx(tiny_dataset, tmp_path / "img.gz", tmp_path / "lbl.gz")
        assert gzip.decompress((tmp_path / "img.gz").read_bytes())[:4] == struct.pack(">I", 0x803)
        assert len(load_idx(tmp_path / "img.gz", tmp_path / "lbl.gz")) == 6

    def test_bad_magic(self, tmp_path, tiny_dataset):
        """Should raise IngestionError with offset 0 on a bad magic number."""
        write_idx(tiny_dataset, tmp_path / "img", tmp_path / "lbl")
        data = bytearray((tmp_path / "img").read_bytes())
        data[3] = 0x01
        (tmp_path / "img").write_bytes(bytes(data))
        with pytest.raises(IngestionError) as exc:
            load_idx(tmp_path / "img", tmp_path / "lbl")
        assert exc.value.offset == 0

    def test_truncated(self, tmp_path, tiny_dataset):
        """Should raise IngestionError on a truncated image file."""
        write_idx(tiny_dataset, tmp_path / "img", tmp_path / "lbl")
        data = (tmp_path / "img").read_bytes()
        (tmp_path / "img").write_bytes(data[:-5])
        with pytest.raises(IngestionError):
            load_idx(tmp_path / "img", tmp_path / "lbl")

    def test_count_mismatch(self, tmp_path, tiny_dataset):
        """Should raise IngestionError when image and label counts differ."""
        write_idx(tiny_dataset, tmp_path / "img", tmp_path / "lbl")
        write_idx(tiny_dataset.take(np.arange(3)), tmp_path / "img3", tmp_path / "lbl3")
        with pytest.raises(IngestionError):
            load_idx(tmp_path / "img", tmp_path / "lbl3")

    def test_label_out_of_range(self, tmp_path, tiny_dataset):
        """Should reject labels that do not fit the class count."""
        write_idx(tiny_dataset, tmp_path / "img", tmp_path / "lbl")
        with pytest.raises(IngestionError):
            load_idx(tmp_path / "img", tmp_path / "lbl", classes=5)

    def test_missing_file(self, tmp_path):
        """Should raise IngestionError for a missing file."""
        with pytest.raises(IngestionError):
            load_idx(tmp_path / "nope", tmp_path / "nope")


class TestMnistFiles:
    """Tests for locating the four MNIST files."""

    def test_available_and_limits(self, tmp_path, tiny_dataset):
        """Should load both splits and apply the limits."""
        _write_mnist(tmp_path, tiny_dataset, gz=True)
        assert mnist_available(tmp_path)
        train, test = load_mnist(tmp_path, train_limit=4, test_limit=2)
        assert (len(train), len(test)) == (4, 2)
        assert test.split == "test"

    def test_missing(self, tmp_path):
        """Should report unavailable data."""
        assert not mnist_available(tmp_path)
        with pytest.raises(IngestionError):
            load_mnist(tmp_path)


class TestDataset:
    """Tests for Dataset validation and helpers."""

    def test_network_input(self, tiny_dataset):
        """Should add the channel axis."""
        assert tiny_dataset.network_input().shape == (6, 1, 4, 4)
        assert tiny_dataset.network_input(np.array([1, 2])).shape == (2, 1, 4, 4)

    def test_subset(self, tiny_dataset):
        """Should keep the first n samples."""
        assert len(subset(tiny_dataset, 2)) == 2
        assert subset(tiny_dataset, None) is tiny_dataset
        with pytest.raises(ConfigurationError):
            subset(tiny_dataset, 0)

    def test_rejects_bad_pixels(self):
        """Should reject pixels outside [0, 1]."""
        with pytest.raises(ConfigurationError):
            Dataset(np.full((1, 2, 2), 2.0, dtype=np.float32), np.array([0]), classes=2)


class TestSynthTwoClass:
    """Tests for synth_twoclass."""

    def test_split_sizes(self):
        """Should put three quarters into the train split."""
        train, test = synth_twoclass(800, 16, seed=0)
        assert (len(train), len(test)) == (600, 200)
        assert train.classes == 2
        assert train.image_shape == (16, 16)

    def test_balanced(self):
        """Should hold both classes equally in both splits."""
        train, test = synth_twoclass(40, 12, seed=1)
        assert int(train.labels.sum()) * 2 == len(train)
        assert int(test.labels.sum()) * 2 == len(test)

    def test_deterministic(self):
        """Should generate identical data for the same seed."""
        a, _ = synth_twoclass(20, 12, seed=3)
        b, _ = synth_twoclass(20, 12, seed=3)
        c, _ = synth_twoclass(20, 12, seed=4)
        assert np.array_equal(a.images, b.images)
        assert not np.array_equal(a.images, c.images)

    def test_pixel_range(self):
        """Should keep pixels in [0, 1]."""
        train, _ = synth_twoclass(20, 12, seed=0)
        assert train.images.min() >= 0.0
        assert train.images.max() <= 1.0

    @pytest.mark.parametrize("n,size", [(7, 16), (2, 16), (20, 4)])
    def test_invalid(self, n, size):
        """Should reject odd or tiny sample counts and small images."""
        with pytest.raises(ConfigurationError):
            synth_twoclass(n, size, seed=0)

    def test_class_intensity_gap(self):
        """Should keep every blob image brighter on average than every bar image."""
        train, test = synth_twoclass(200, 16, seed=5)
        for split in (train, test):
            means = split.images.reshape(len(split), -1).mean(axis=1)
            bars = means[split.labels == 0]
            blobs = means[split.labels == 1]
            assert bars.max() < blobs.min()


class TestSynthLearnable:
    """Training smoke test on the synthetic set."""

    def test_lenet_separates_classes(self):
        """Should reach more than 95% test accuracy with default learning rate and batch size."""
        config = parse_run_config({
            "arch": "256 (5x5)6c 2s (3x3)12c 2s 2o",
            "dataset": "synthetic",
            "synth_samples": 2000,
            "synth_size": 16,
            "epochs": 30,
            "seed": 0,
        })
        report = experiment.run(config)
        assert report.final_accuracy > 95.0


class TestBatches:
    """Tests for batches."""

    def test_last_batch_short(self):
        """Should split 101 samples into 50, 50 and 1."""
        assert [len(b) for b in batches(101, 50, shuffle_seed=0)] == [50, 50, 1]

    def test_covers_every_sample_once(self):
        """Should visit every index exactly once per epoch."""
        seen = np.concatenate(batches(37, 8, shuffle_seed=2, epoch=1))
        assert sorted(seen.tolist()) == list(range(37))

    def test_order_depends_on_epoch(self):
        """Should reshuffle each epoch and repeat for the same seed."""
        first = np.concatenate(batches(50, 10, shuffle_seed=0, epoch=0))
        again = np.concatenate(batches(50, 10, shuffle_seed=0, epoch=0))
        second = np.concatenate(batches(50, 10, shuffle_seed=0, epoch=1))
        assert np.array_equal(first, again)
        assert not np.array_equal(first, second)

    def test_accepts_dataset(self, tiny_dataset):
        """Should take the sample count from a Dataset."""
        assert sum(len(b) for b in batches(tiny_dataset, 4, shuffle_seed=0)) == 6

    def test_invalid_batch_size(self):
        """Should reject batch sizes below 1."""
        with pytest.raises(ConfigurationError):
            batches(10, 0, shuffle_seed=0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
