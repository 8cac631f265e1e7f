"""
Dataset service.

IDX (MNIST) ingestion and writing, the synthetic two-class stand-in for the
face / non-face benchmark, and deterministic mini-batch ordering.
"""
import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from app.config import (
    IDX_IMAGE_MAGIC,
    IDX_LABEL_MAGIC,
    MNIST_CLASSES,
    MNIST_FILES,
    SYNTH_MIN_SIZE,
    SYNTH_NOISE,
    SYNTH_TRAIN_FRACTION,
)
from app.errors import ConfigurationError, IngestionError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_GZIP_MAGIC = b"\x1f\x8b"
_IMAGE_HEADER = struct.Struct(">IIII")
_LABEL_HEADER = struct.Struct(">II")


@dataclass(frozen=True)
class Dataset:
    """
    Images in [0, 1] with integer labels.

    Attributes:
        images: float32 [N, H, W]
        labels: int64 [N], every label < classes
        classes: number of classes C
        split: "train" or "test"
    """
    images: np.ndarray
    labels: np.ndarray
    classes: int
    split: str = "train"

    def __post_init__(self):
        if self.images.ndim != 3:
            raise ConfigurationError(f"Dataset images must be [N, H, W], got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ConfigurationError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ConfigurationError(f"Labels must lie in [0, {self.classes})")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ConfigurationError("Pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> Tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def network_input(self, indices: Optional[np.ndarray] = None) -> np.ndarray:
        """[N, 1, H, W] view for the network."""
        images = self.images if indices is None else self.images[indices]
        return images[:, None, :, :]

    def take(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.images[indices], self.labels[indices], self.classes, self.split)


def subset(dataset: Dataset, n: Optional[int]) -> Dataset:
    """First ``n`` samples (all when n is None or larger than the dataset)."""
    if n is None or n >= len(dataset):
        return dataset
    if n < 1:
        raise ConfigurationError(f"Subset size must be >= 1, got {n}")
    return dataset.take(np.arange(n))


# =============================================================================
# IDX
# =============================================================================

def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"File not found: {path}", 0)
    data = path.read_bytes()
    if data[:2] == _GZIP_MAGIC:
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as e:
            raise IngestionError(f"Corrupt gzip stream in {path}: {e}", 0) from e
    return data


def _parse_images(data: bytes) -> np.ndarray:
    if len(data) < _IMAGE_HEADER.size:
        raise IngestionError(
            f"Truncated image header: expected {_IMAGE_HEADER.size} bytes, got {len(data)}", len(data)
        )
    magic, n, rows, cols = _IMAGE_HEADER.unpack_from(data, 0)
    if magic != IDX_IMAGE_MAGIC:
        raise IngestionError(f"Bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}", 0)
    expected = _IMAGE_HEADER.size + n * rows * cols
    if len(data) < expected:
        raise IngestionError(f"Truncated image data: expected {expected} bytes, got {len(data)}", len(data))
    pixels = np.frombuffer(data, dtype=np.uint8, count=n * rows * cols, offset=_IMAGE_HEADER.size)
    return pixels.reshape(n, rows, cols)


def _parse_labels(data: bytes) -> np.ndarray:
    if len(data) < _LABEL_HEADER.size:
        raise IngestionError(
            f"Truncated label header: expected {_LABEL_HEADER.size} bytes, got {len(data)}", len(data)
        )
    magic, n = _LABEL_HEADER.unpack_from(data, 0)
    if magic != IDX_LABEL_MAGIC:
        raise IngestionError(f"Bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}", 0)
    expected = _LABEL_HEADER.size + n
    if len(data) < expected:
        raise IngestionError(f"Truncated label data: expected {expected} bytes, got {len(data)}", len(data))
    return np.frombuffer(data, dtype=np.uint8, count=n, offset=_LABEL_HEADER.size).astype(np.int64)


def load_idx(
    images_path: PathLike,
    labels_path: PathLike,
    split: str = "train",
    classes: int = MNIST_CLASSES,
) -> Dataset:
    """
    Load an IDX image/label pair (plain or gzip-compressed).

    Args:
        images_path: IDX3 image file (magic 0x00000803)
        labels_path: IDX1 label file (magic 0x00000801)
        split: split tag stored on the Dataset
        classes: number of classes C

    Returns:
        Dataset with pixels scaled by 1/255

    Raises:
        IngestionError: bad magic, truncated file, count mismatch or
            out-of-range label, with the byte offset
    """
    pixels = _parse_images(_read_bytes(images_path))
    labels = _parse_labels(_read_bytes(labels_path))
    if len(pixels) != len(labels):
        raise IngestionError(f"{len(pixels)} images but {len(labels)} labels", 4)
    if len(labels) and labels.max() >= classes:
        bad = int(np.argmax(labels >= classes))
        raise IngestionError(
            f"Label {labels[bad]} is not below {classes}", _LABEL_HEADER.size + bad
        )
    images = pixels.astype(np.float32) / np.float32(255)
    logger.info(f"Loaded {len(labels)} {split} samples ({pixels.shape[1]}x{pixels.shape[2]}) from {images_path}")
    return Dataset(images=images, labels=labels, classes=classes, split=split)


def write_idx(dataset: Dataset, images_path: PathLike, labels_path: PathLike) -> None:
    """Write a Dataset as IDX; a .gz suffix writes gzip-compressed files."""
    levels = np.clip(np.rint(dataset.images * 255), 0, 255).astype(np.uint8)
    n, rows, cols = levels.shape
    image_bytes = _IMAGE_HEADER.pack(IDX_IMAGE_MAGIC, n, rows, cols) + levels.tobytes()
    label_bytes = _LABEL_HEADER.pack(IDX_LABEL_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes()
    for path, data in ((Path(images_path), image_bytes), (Path(labels_path), label_bytes)):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(gzip.compress(data, mtime=0) if path.suffix == ".gz" else data)


def resolve_mnist(data_dir: PathLike) -> Dict[str, Tuple[Path, Path]]:
    """
    Locate the four MNIST files (plain or .gz) in ``data_dir``.

    Returns:
        {"train": (images, labels), "test": (images, labels)}

    Raises:
        IngestionError: a file is missing
    """
    data_dir = Path(data_dir)
    found: Dict[str, Tuple[Path, Path]] = {}
    missing: List[str] = []
    for split, names in MNIST_FILES.items():
        paths = []
        for name in names:
            candidates = [data_dir / name, data_dir / f"{name}.gz"]
            hit = next((p for p in candidates if p.exists()), None)
            if hit is None:
                missing.append(name)
            paths.append(hit)
        found[split] = (paths[0], paths[1])
    if missing:
        raise IngestionError(f"MNIST files missing in {data_dir}: {', '.join(missing)}", 0)
    return found


def mnist_available(data_dir: PathLike) -> bool:
    try:
        resolve_mnist(data_dir)
        return True
    except IngestionError:
        return False


def load_mnist(
    data_dir: PathLike,
    train_limit: Optional[int] = None,
    test_limit: Optional[int] = None,
) -> Tuple[Dataset, Dataset]:
    paths = resolve_mnist(data_dir)
    train = load_idx(*paths["train"], split="train")
    test = load_idx(*paths["test"], split="test")
    return subset(train, train_limit), subset(test, test_limit)


# =============================================================================
# SYNTHETIC TWO-CLASS SET
# =============================================================================

def _bars_image(rng: np.random.Generator, size: int, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    """Class 0: 2-3 thin bright bars on a dark field."""
    img = np.zeros((size, size))
    for _ in range(int(rng.integers(2, 4))):
        angle = rng.uniform(0, np.pi)
        cx, cy = rng.uniform(0.25 * size, 0.75 * size, size=2)
        length = rng.uniform(0.4, 0.7) * size
        width = max(1.0, size / 16) * rng.uniform(0.8, 1.2)
        along = (xx - cx) * np.cos(angle) + (yy - cy) * np.sin(angle)
        across = -(xx - cx) * np.sin(angle) + (yy - cy) * np.cos(angle)
        bar = (np.abs(along) <= length / 2) & (np.abs(across) <= width / 2)
        img = np.where(bar, np.maximum(img, rng.uniform(0.8, 1.0)), img)
    return img + rng.uniform(0, SYNTH_NOISE, size=img.shape)


def _blobs_image(rng: np.random.Generator, size: int, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    """Class 1: 3-5 broad isotropic Gaussian blobs covering most of the frame."""
    img = np.zeros((size, size))
    for _ in range(int(rng.integers(3, 6))):
        cx, cy = rng.uniform(0.2 * size, 0.8 * size, size=2)
        sigma = rng.uniform(0.22, 0.32) * size
        amplitude = rng.uniform(0.9, 1.0)
        img += amplitude * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma * sigma))
    return img + rng.uniform(0, SYNTH_NOISE, size=img.shape)


def synth_twoclass(n: int, size: int, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Synthetic two-class set: oriented-bar composites vs isotropic blobs.

    Bars cover a small share of a dark frame while blobs fill most of it, so
    the classes differ in mean intensity (roughly 0.1 against 0.5 and above)
    as well as in shape. A LeNet-style network separates them in a few
    hundred updates at the default learning rate.

    Labels alternate 0, 1, 0, 1 ... so both classes hold exactly n/2 samples
    and both splits stay balanced. Three quarters (rounded down to an even
    count) go to the train split.

    Args:
        n: total samples, even and >= 4
        size: image side, >= 8
        seed: generator seed

    Returns:
        (train, test) Datasets

    Examples:
        >>> train, test = synth_twoclass(800, 48, seed=0)
        >>> len(train), len(test)
        (600, 200)
    """
    if n % 2:
        raise ConfigurationError(f"Sample count must be even, got {n}")
    if n < 4:
        raise ConfigurationError(f"Sample count must be >= 4, got {n}")
    if size < SYNTH_MIN_SIZE:
        raise ConfigurationError(f"Image size must be >= {SYNTH_MIN_SIZE}, got {size}")

    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    labels = np.arange(n, dtype=np.int64) % 2
    images = np.empty((n, size, size), dtype=np.float32)
    for index, label in enumerate(labels):
        make = _bars_image if label == 0 else _blobs_image
        images[index] = np.clip(make(rng, size, yy, xx), 0.0, 1.0)

    n_train = int(n * SYNTH_TRAIN_FRACTION) // 2 * 2
    train = Dataset(images[:n_train], labels[:n_train], classes=2, split="train")
    test = Dataset(images[n_train:], labels[n_train:], classes=2, split="test")
    return train, test


# =============================================================================
# BATCHING
# =============================================================================

def batches(dataset: Union[Dataset, int], batch_size: int, shuffle_seed: int, epoch: int = 0) -> List[np.ndarray]:
    """
    Index slices for one epoch.

    The permutation is derived from (shuffle_seed, epoch); every sample appears
    exactly once and the last batch may be short.

    Examples:
        >>> [len(b) for b in batches(101, 50, shuffle_seed=0)]
        [50, 50, 1]
    """
    if batch_size < 1:
        raise ConfigurationError(f"Batch size must be >= 1, got {batch_size}")
    n = dataset if isinstance(dataset, int) else len(dataset)
    order = np.random.default_rng([shuffle_seed, epoch]).permutation(n)
    return [order[start:start + batch_size] for start in range(0, n, batch_size)]
