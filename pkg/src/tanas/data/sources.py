"""Image source ingestion.

``load_source`` returns an immutable ImageCollection with deterministic
ordering.  Accepted containers:

* mnist / fashion_mnist: IDX files under the given directory.  If both the
  train pair (train-images-idx3-ubyte / train-labels-idx1-ubyte) and the
  test pair (t10k-*) exist they are concatenated, train first; a single
  pair also works.  Task splits are drawn later from the combined pool.
* quickdraw: one ``<category>.npy`` uint8 bitmap array per category, shaped
  (N, 784) or (N, 28, 28); categories ordered by sorted filename.
* synthetic: no files; a parameterized blob generator (see synthetic).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataFormatError, ValidationError
from . import idx, synthetic

SOURCES = ("mnist", "fashion_mnist", "quickdraw", "synthetic")


@dataclass(frozen=True)
class ImageCollection:
    """Indexed grayscale images with integer labels and class names."""

    source: str
    images: np.ndarray  # (N, 28, 28) uint8
    labels: np.ndarray  # (N,) int64
    class_names: tuple[str, ...]

    def __post_init__(self):
        if self.images.ndim != 3:
            raise ValidationError(f"images must be (N,H,W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValidationError("images/labels length mismatch")

    def __len__(self) -> int:
        return len(self.images)

    def label_of(self, name_or_index) -> int:
        """Resolves a category name or integer id to the integer label."""
        if isinstance(name_or_index, (int, np.integer)):
            lab = int(name_or_index)
            if not 0 <= lab < len(self.class_names):
                raise ValidationError(
                    f"label {lab} out of range; available: "
                    f"{list(enumerate(self.class_names))}")
            return lab
        name = str(name_or_index)
        if name in self.class_names:
            return self.class_names.index(name)
        if name.isdigit() and int(name) < len(self.class_names):
            return int(name)
        raise ValidationError(
            f"unknown category {name!r}; available: {list(self.class_names)}")


def _load_idx_dir(source: str, path: Path) -> ImageCollection:
    pairs = []
    for stem in ("train", "t10k"):
        img_f = path / f"{stem}-images-idx3-ubyte"
        lab_f = path / f"{stem}-labels-idx1-ubyte"
        if img_f.exists() or lab_f.exists():
            images = idx.read_idx_images(img_f)
            labels = idx.read_idx_labels(lab_f)
            if len(images) != len(labels):
                raise DataFormatError(
                    f"{img_f.name} has {len(images)} images but "
                    f"{lab_f.name} has {len(labels)} labels", path=path)
            pairs.append((images, labels))
    if not pairs:
        raise DataFormatError(
            "no IDX files found (expected train-images-idx3-ubyte / "
            "train-labels-idx1-ubyte and optionally t10k-*)", path=path)
    images = np.concatenate([p[0] for p in pairs])
    labels = np.concatenate([p[1] for p in pairs]).astype(np.int64)
    names = (synthetic.DIGIT_CLASSES if source == "mnist"
             else synthetic.FASHION_CLASSES)
    return ImageCollection(source=source, images=images, labels=labels,
                           class_names=names)


def _load_quickdraw_dir(path: Path) -> ImageCollection:
    files = sorted(path.glob("*.npy"))
    if not files:
        raise DataFormatError("no .npy category files found", path=path)
    all_images = []
    all_labels = []
    names = []
    for ci, f in enumerate(files):
        try:
            arr = np.load(f)
        except (ValueError, OSError) as e:
            raise DataFormatError(f"unreadable npy array: {e}", path=f) from e
        if arr.dtype != np.uint8:
            raise DataFormatError(f"expected uint8 bitmaps, got {arr.dtype}", path=f)
        if arr.ndim == 2 and arr.shape[1] == 28 * 28:
            arr = arr.reshape(-1, 28, 28)
        elif not (arr.ndim == 3 and arr.shape[1:] == (28, 28)):
            raise DataFormatError(
                f"expected (N,784) or (N,28,28) bitmaps, got {arr.shape}", path=f)
        all_images.append(arr)
        all_labels.append(np.full(len(arr), ci, dtype=np.int64))
        names.append(f.stem)
    return ImageCollection(source="quickdraw",
                           images=np.concatenate(all_images),
                           labels=np.concatenate(all_labels),
                           class_names=tuple(names))


def load_source(source: str, path=None, **synthetic_kwargs) -> ImageCollection:
    """Loads an image source from disk (or generates the synthetic one)."""
    if source not in SOURCES:
        raise ValidationError(f"unknown source {source!r}; choose from {SOURCES}")
    if source == "synthetic":
        images, labels = synthetic.blob_collection(**synthetic_kwargs)
        return ImageCollection(source="synthetic", images=images, labels=labels,
                               class_names=("blob_a", "blob_b"))
    if path is None:
        raise ValidationError(f"source {source!r} needs a directory path")
    path = Path(path)
    if not path.is_dir():
        raise DataFormatError("source directory does not exist", path=path)
    if source == "quickdraw":
        return _load_quickdraw_dir(path)
    return _load_idx_dir(source, path)
