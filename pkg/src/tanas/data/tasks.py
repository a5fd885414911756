"""Binary indicator tasks with deterministic, balanced, disjoint splits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from .sources import ImageCollection

DEFAULT_FRACTIONS = (0.8, 0.1, 0.1)
SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class TaskSpec:
    """A one-vs-rest indicator task over an image source.

    ``splits`` hold index arrays into the source collection; labels are
    derived on materialization (1 where the source label equals the positive
    class).  Negatives are a uniform size-matched sample over all other
    categories, so every split is class-balanced within one sample.
    """

    task_id: str
    source: str
    positive_label: int
    positive_name: str
    splits: dict = field(compare=False)
    image_shape: tuple = (1, 28, 28)
    seed: int = 0

    def split_sizes(self) -> dict:
        return {k: int(len(v)) for k, v in self.splits.items()}

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "source": self.source,
            "positive_label": int(self.positive_label),
            "positive_name": self.positive_name,
            "image_shape": list(self.image_shape),
            "seed": int(self.seed),
            "splits": {k: np.asarray(v).tolist() for k, v in self.splits.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(task_id=d["task_id"], source=d["source"],
                   positive_label=int(d["positive_label"]),
                   positive_name=d["positive_name"],
                   splits={k: np.asarray(v, dtype=np.int64)
                           for k, v in d["splits"].items()},
                   image_shape=tuple(d["image_shape"]), seed=int(d["seed"]))


@dataclass(frozen=True)
class DataSplit:
    """Materialized tensors for one split: images in [0,1], binary labels."""

    images: np.ndarray  # (N, 1, 28, 28) float32
    labels: np.ndarray  # (N,) int64 in {0, 1}

    def __len__(self) -> int:
        return len(self.labels)


def _split_counts(n: int, fractions) -> list[int]:
    bounds = np.round(np.cumsum(fractions) * n).astype(int)
    counts = np.diff(np.concatenate([[0], bounds]))
    return counts.tolist()


def make_binary_task(collection: ImageCollection, positive_label,
                     split_fractions=DEFAULT_FRACTIONS, seed: int = 0,
                     task_id: str | None = None,
                     max_per_class: int | None = None) -> TaskSpec:
    """Builds a balanced binary TaskSpec with reproducible disjoint splits.

    Positives are every sample of the positive class (optionally capped at
    ``max_per_class``); negatives are a uniform sample of equal size from
    the remaining categories.  Each class is split by ``split_fractions``
    independently, so per-split balance is exact when the class totals match.
    """
    fractions = tuple(float(f) for f in split_fractions)
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"split fractions must sum to 1, got {fractions}")
    if min(fractions) < 0:
        raise ValidationError(f"split fractions must be nonnegative, got {fractions}")
    plabel = collection.label_of(positive_label)
    pname = collection.class_names[plabel]
    rng = np.random.default_rng(seed)

    pos_pool = np.flatnonzero(collection.labels == plabel)
    neg_pool = np.flatnonzero(collection.labels != plabel)
    if len(pos_pool) == 0:
        raise ValidationError(
            f"no samples of category {pname!r}; available: "
            f"{list(collection.class_names)}")
    n = len(pos_pool)
    if max_per_class is not None:
        n = min(n, int(max_per_class))
    if len(neg_pool) < n:
        n = len(neg_pool)
    pos = rng.permutation(pos_pool)[:n]
    neg = rng.permutation(neg_pool)[:n]

    counts = _split_counts(n, fractions)
    splits = {}
    p_off = n_off = 0
    for name, c in zip(SPLIT_NAMES, counts):
        merged = np.concatenate([pos[p_off:p_off + c], neg[n_off:n_off + c]])
        splits[name] = np.sort(rng.permutation(merged))
        p_off += c
        n_off += c
    return TaskSpec(task_id=task_id or f"{collection.source}-{pname}",
                    source=collection.source, positive_label=plabel,
                    positive_name=pname, splits=splits,
                    image_shape=(1,) + collection.images.shape[1:], seed=seed)


def materialize(task: TaskSpec, collection: ImageCollection) -> dict[str, DataSplit]:
    """Turns index splits into float tensors; re-ingestion is byte-stable."""
    if collection.source != task.source:
        raise ValidationError(
            f"task {task.task_id!r} is over source {task.source!r}, "
            f"got collection of {collection.source!r}")
    out = {}
    for name, index in task.splits.items():
        index = np.asarray(index, dtype=np.int64)
        if len(index) and index.max() >= len(collection):
            raise ValidationError(
                f"split {name!r} of task {task.task_id!r} indexes beyond the "
                f"collection ({index.max()} >= {len(collection)})")
        images = (collection.images[index].astype(np.float32) / 255.0)
        images = images[:, None, :, :]
        labels = (collection.labels[index] == task.positive_label).astype(np.int64)
        out[name] = DataSplit(images=images, labels=labels)
    return out
