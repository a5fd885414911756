"""Persistent dictionary of solved base tasks.

Each entry pairs a task with a trained representative network that reached
accuracy >= 1 - epsilon on the task's held-out test split (boundary equality
admits).  On disk every entry owns a directory:

    <root>/<task_id>/meta.json   task descriptor, epsilon, accuracy, seeds,
                                 feature-cut index, recorded search-space info
    <root>/<task_id>/weights     binary checkpoint (see nn.checkpoint)

``<root>/index.json`` lists task ids in insertion order.  Writes are
serialized by a store-level file lock and staged in a temp directory, so a
failed add leaves no partial files.  Entries are immutable once admitted.
"""

from __future__ import annotations

import json
import os
import re
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from filelock import FileLock

from .data.sources import ImageCollection
from .data.tasks import TaskSpec, materialize
from .errors import StoreError, TrainingError, ValidationError
from .nn import (
    NetworkGraph,
    TrainConfig,
    build_network,
    conv,
    default_feature_cut,
    dense,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

DEFAULT_EPSILON = 0.04
_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

# one shared representative architecture for every base task
REPRESENTATIVE_SPEC = lambda: [conv(32, 5, 5), dense(1024), dense(2)]  # noqa: E731

# the operation set cells draw from by default; recorded per entry so the
# search space of a new task can be combined from its related entries
DEFAULT_CELL_OPS = ("identity", "zero", "dil_conv3x3", "sep_conv3x3", "maxpool2x2")


def default_space_info() -> dict:
    return {"operations": list(DEFAULT_CELL_OPS), "num_nodes": 4, "skeleton": None}


@dataclass
class DictionaryEntry:
    task: TaskSpec
    network: NetworkGraph
    epsilon: float
    achieved_accuracy: float
    created_at: str = ""
    checkpoint_path: str = ""
    feature_cut: int | None = None
    train_seed: int = 0
    source_path: str | None = None
    space_info: dict = field(default_factory=default_space_info)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValidationError(f"epsilon must lie in (0,1), got {self.epsilon}")

    @property
    def is_representative(self) -> bool:
        return self.achieved_accuracy >= 1.0 - self.epsilon

    def penultimate_width(self) -> int:
        cut = self.feature_cut
        if cut is None:
            cut = default_feature_cut(self.network)
        return int(self.network.layers[cut - 1].out_shape[0])


def train_representative(task: TaskSpec, collection: ImageCollection,
                         epsilon: float = DEFAULT_EPSILON,
                         cfg: TrainConfig | None = None,
                         max_attempts: int = 3,
                         arch_spec=None) -> DictionaryEntry:
    """Trains the shared representative architecture until it clears the gate.

    Attempts are reseeded: attempt k trains with seed cfg.seed + k.  Succeeds
    as soon as test accuracy >= 1 - epsilon; otherwise raises TrainingError
    carrying the best accuracy reached.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValidationError(f"epsilon must lie in (0,1), got {epsilon}")
    cfg = cfg or TrainConfig(learning_rate=0.05, batch_size=64, max_epochs=3, seed=0)
    data = materialize(task, collection)
    best = -1.0
    for attempt in range(max_attempts):
        seed = cfg.seed + attempt
        attempt_cfg = TrainConfig(loss=cfg.loss, learning_rate=cfg.learning_rate,
                                  batch_size=cfg.batch_size, max_epochs=cfg.max_epochs,
                                  seed=seed)
        net = build_network(arch_spec or REPRESENTATIVE_SPEC(), task.image_shape,
                            seed=seed)
        train(net, data["train"], attempt_cfg)
        acc = evaluate(net, data["test"]).accuracy
        best = max(best, acc)
        if acc >= 1.0 - epsilon:
            return DictionaryEntry(
                task=task, network=net, epsilon=epsilon, achieved_accuracy=acc,
                created_at=datetime.now(timezone.utc).isoformat(),
                feature_cut=default_feature_cut(net), train_seed=seed)
    raise TrainingError(
        f"task {task.task_id!r} did not reach accuracy {1.0 - epsilon:.4f} in "
        f"{max_attempts} attempts (best {best:.4f})", best_accuracy=best)


class Dictionary:
    """Store of DictionaryEntry keyed by task id, insertion-ordered."""

    def __init__(self, storage_root):
        self.storage_root = Path(storage_root)

    # -- store plumbing ------------------------------------------------------

    @property
    def _index_path(self) -> Path:
        return self.storage_root / "index.json"

    def _lock(self) -> FileLock:
        return FileLock(str(self.storage_root / ".lock"))

    @classmethod
    def init(cls, storage_root) -> "Dictionary":
        root = Path(storage_root)
        root.mkdir(parents=True, exist_ok=True)
        store = cls(root)
        if not store._index_path.exists():
            store._write_index([])
        return store

    def _read_index(self) -> list[str]:
        if not self._index_path.exists():
            raise StoreError(f"{self.storage_root} is not an initialized store "
                             f"(missing index.json); run init first")
        return json.loads(self._index_path.read_text())

    def _write_index(self, ids: list[str]) -> None:
        tmp = self._index_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(ids, indent=0))
        os.replace(tmp, self._index_path)

    # -- operations ----------------------------------------------------------

    def add(self, entry: DictionaryEntry) -> DictionaryEntry:
        """Admits an entry; atomic, rejects duplicates and non-representative."""
        task_id = entry.task.task_id
        if not _ID_RE.match(task_id):
            raise ValidationError(
                f"task_id {task_id!r} must match {_ID_RE.pattern}")
        if not entry.is_representative:
            raise ValidationError(
                f"entry {task_id!r} is not representative: accuracy "
                f"{entry.achieved_accuracy:.4f} < {1.0 - entry.epsilon:.4f}")
        with self._lock():
            ids = self._read_index()
            if task_id in ids:
                raise StoreError(f"duplicate task id {task_id!r}; store unchanged")
            final_dir = self.storage_root / task_id
            tmp_dir = self.storage_root / f".tmp-{task_id}"
            if tmp_dir.exists():
                shutil.rmtree(tmp_dir)
            try:
                tmp_dir.mkdir()
                save_checkpoint(entry.network, tmp_dir / "weights",
                                metadata={"train_seed": entry.train_seed})
                meta = {
                    "task": entry.task.to_dict(),
                    "epsilon": entry.epsilon,
                    "achieved_accuracy": entry.achieved_accuracy,
                    "created_at": entry.created_at,
                    "train_seed": entry.train_seed,
                    "feature_cut": entry.feature_cut,
                    "source_path": entry.source_path,
                    "space_info": entry.space_info,
                    "checkpoint": "weights",
                }
                (tmp_dir / "meta.json").write_text(json.dumps(meta, indent=2))
                os.replace(tmp_dir, final_dir)
            except BaseException:
                shutil.rmtree(tmp_dir, ignore_errors=True)
                raise
            self._write_index(ids + [task_id])
        entry.checkpoint_path = str(final_dir / "weights")
        return entry

    def get(self, task_id: str) -> DictionaryEntry:
        ids = self._read_index()
        if task_id not in ids:
            raise StoreError(f"unknown task id {task_id!r}; known: {ids}")
        entry_dir = self.storage_root / task_id
        meta = json.loads((entry_dir / "meta.json").read_text())
        net, _ = load_checkpoint(entry_dir / meta["checkpoint"])
        return DictionaryEntry(
            task=TaskSpec.from_dict(meta["task"]),
            network=net,
            epsilon=meta["epsilon"],
            achieved_accuracy=meta["achieved_accuracy"],
            created_at=meta["created_at"],
            checkpoint_path=str(entry_dir / meta["checkpoint"]),
            feature_cut=meta["feature_cut"],
            train_seed=meta["train_seed"],
            source_path=meta["source_path"],
            space_info=meta["space_info"])

    def list(self) -> list[str]:
        """Task ids in insertion order."""
        return list(self._read_index())

    def __contains__(self, task_id: str) -> bool:
        return task_id in self._read_index()

    def __len__(self) -> int:
        return len(self._read_index())


def verify_entry(entry: DictionaryEntry, collection: ImageCollection,
                 tolerance: float = 1e-6) -> float:
    """Re-evaluates the stored network on the stored test split.

    Returns the measured accuracy; raises if it drifts beyond tolerance from
    the recorded value.
    """
    data = materialize(entry.task, collection)
    acc = evaluate(entry.network, data["test"]).accuracy
    if abs(acc - entry.achieved_accuracy) > tolerance:
        raise ValidationError(
            f"entry {entry.task.task_id!r} replays accuracy {acc:.8f}, "
            f"recorded {entry.achieved_accuracy:.8f}")
    return acc
