"""Directed task dissimilarity via prunable feature transforms.

The dissimilarity from task A to task B is measured by how small a
transform network can get while still mapping A's penultimate features of
B's inputs onto B's penultimate features of the same inputs:

1. push B's training images through both representative networks and
   collect penultimate activations,
2. fit an over-parameterized dense transform with MSE regression,
3. iteratively zero the smallest-magnitude weights (globally, weight
   tensors only; biases are neither pruned nor counted), fine-tuning with
   the pruned coordinates frozen, while a quality gate holds,
4. report the fraction of weights left unpruned, a number in [0, 1].

The measure is directed: d(A->B) and d(B->A) generally differ.  Features
are standardized to unit RMS before fitting; the quality gate is relative,
so standardization does not affect accepted sparsity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dictionary import Dictionary, DictionaryEntry
from .data.sources import ImageCollection
from .data.tasks import materialize
from .errors import TrainingError, ValidationError
from .nn import (
    NetworkGraph,
    TrainConfig,
    build_network,
    dense,
    evaluate,
    penultimate_features,
    train,
)


@dataclass(frozen=True)
class SimilarityConfig:
    """Settings shared by every transform fit and prune run."""

    hidden_widths: tuple = (2048, 512)
    train_cfg: TrainConfig = field(default_factory=lambda: TrainConfig(
        loss="mean_squared_error", learning_rate=0.05, batch_size=64,
        max_epochs=12, seed=0))
    max_samples: int = 1024        # cap on how much of X_B feeds the fit
    val_fraction: float = 0.2
    quality_tolerance: float = 0.05
    mse_floor: float = 1e-6        # absolute slack so near-zero baselines stay prunable
    prune_step: float = 0.2
    fine_tune_epochs: int = 1
    max_rounds: int | None = None
    gate: str = "mse"              # or "accuracy": end-task accuracy >= 1 - epsilon
    seed: int = 0


@dataclass(frozen=True)
class FeaturePairs:
    """Standardized feature regression data for one (A -> B) transform."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    labels_val: np.ndarray | None = None  # target-task labels for the accuracy gate


@dataclass(frozen=True)
class TransformJob:
    source: DictionaryEntry
    target: DictionaryEntry
    pairs: FeaturePairs
    cfg: SimilarityConfig

    def transform_spec(self) -> list[dict]:
        width_out = self.pairs.y_train.shape[1]
        return [dense(w) for w in self.cfg.hidden_widths] + [dense(width_out)]


@dataclass(frozen=True)
class PruneTrace:
    """Accepted prune rounds: (sparsity_level, val_mse), strictly increasing."""

    rounds: tuple
    final_nonzero_fraction: float
    baseline_val_mse: float

    def __post_init__(self):
        levels = [r[0] for r in self.rounds]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValidationError(f"sparsity levels must strictly increase: {levels}")
        if not 0.0 <= self.final_nonzero_fraction <= 1.0:
            raise ValidationError(
                f"nonzero fraction outside [0,1]: {self.final_nonzero_fraction}")

    @property
    def final_val_mse(self) -> float:
        return self.rounds[-1][1] if self.rounds else self.baseline_val_mse


@dataclass(frozen=True)
class DistanceEntry:
    from_task: str
    to_task: str
    epsilon: float
    distance: float
    trace: PruneTrace

    def __post_init__(self):
        if not 0.0 <= self.distance <= 1.0:
            raise ValidationError(f"distance outside [0,1]: {self.distance}")


def _rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(a, dtype=np.float64))))


def build_feature_pairs(source: DictionaryEntry, target: DictionaryEntry,
                        target_collection: ImageCollection,
                        cfg: SimilarityConfig) -> FeaturePairs:
    """Runs X_B through both representative networks and standardizes."""
    data = materialize(target.task, target_collection)
    X = data["train"].images
    labels = data["train"].labels
    rng = np.random.default_rng(cfg.seed)
    if len(X) > cfg.max_samples:
        keep = rng.permutation(len(X))[:cfg.max_samples]
        keep.sort()
        X, labels = X[keep], labels[keep]
    feats_a = penultimate_features(source.network, X, cut=source.feature_cut)
    feats_b = penultimate_features(target.network, X, cut=target.feature_cut)
    sa, sb = _rms(feats_a), _rms(feats_b)
    if sa > 1e-8:
        feats_a = feats_a / sa
    if sb > 1e-8:
        feats_b = feats_b / sb
    n_val = max(1, int(round(cfg.val_fraction * len(X))))
    # deterministic interleaved holdout
    order = np.random.default_rng(cfg.seed + 1).permutation(len(X))
    val_idx, train_idx = order[:n_val], order[n_val:]
    return FeaturePairs(x_train=feats_a[train_idx], y_train=feats_b[train_idx],
                        x_val=feats_a[val_idx], y_val=feats_b[val_idx],
                        labels_val=labels[val_idx])


def fit_transform(job: TransformJob) -> tuple[NetworkGraph, float]:
    """Trains the transform net; returns (net, held-out MSE).

    Training failures (non-finite loss) surface as TrainingError with the
    job's endpoints named.
    """
    pairs = job.pairs
    net = build_network(job.transform_spec(), (pairs.x_train.shape[1],),
                        seed=job.cfg.seed)
    try:
        train(net, (pairs.x_train, pairs.y_train), job.cfg.train_cfg)
    except TrainingError as e:
        raise TrainingError(
            f"transform fit {job.source.task.task_id} -> "
            f"{job.target.task.task_id} diverged: {e}") from e
    val_mse = evaluate(net, (pairs.x_val, pairs.y_val),
                       loss="mean_squared_error").loss
    return net, val_mse


# -- pruning ------------------------------------------------------------------

def _prunable(net: NetworkGraph):
    """(layer, param name) for every weight tensor (ndim >= 2); biases stay."""
    out = []
    for lay in net.layers:
        for name in sorted(lay.params):
            if lay.params[name].ndim >= 2:
                out.append((lay, name))
    return out

def nonzero_fraction(net: NetworkGraph) -> float:
    total = unmasked = 0
    for lay, name in _prunable(net):
        p = lay.params[name]
        total += p.size
        m = lay.masks.get(name)
        unmasked += int(m.sum()) if m is not None else p.size
    return unmasked / total if total else 1.0


def _prune_smallest(net: NetworkGraph, count: int) -> None:
    """Masks the ``count`` globally smallest-magnitude unpruned weights."""
    mags = []
    coords = []
    for ti, (lay, name) in enumerate(_prunable(net)):
        p = lay.params[name].reshape(-1)
        m = lay.masks.get(name)
        alive = np.flatnonzero(m.reshape(-1) > 0) if m is not None else np.arange(p.size)
        mags.append(np.abs(p[alive]))
        coords.append((ti, alive))
    allmags = np.concatenate(mags) if mags else np.empty(0)
    if count >= allmags.size:
        chosen = np.arange(allmags.size)
    else:
        # stable global order: magnitude first, flat position as tie-break
        chosen = np.lexsort((np.arange(allmags.size), allmags))[:count]
    chosen_mask = np.zeros(allmags.size, dtype=bool)
    chosen_mask[chosen] = True
    offset = 0
    tensors = _prunable(net)
    for ti, alive in coords:
        lay, name = tensors[ti]
        n_alive = alive.size
        hit = alive[chosen_mask[offset:offset + n_alive]]
        offset += n_alive
        if hit.size == 0:
            continue
        if name not in lay.masks:
            lay.masks[name] = np.ones_like(lay.params[name])
        lay.masks[name].reshape(-1)[hit] = 0.0
        lay.apply_masks()


def _snapshot(net: NetworkGraph):
    return ([{k: v.copy() for k, v in lay.params.items()} for lay in net.layers],
            [{k: v.copy() for k, v in lay.masks.items()} for lay in net.layers])


def _restore(net: NetworkGraph, snap) -> None:
    params, masks = snap
    for lay, p, m in zip(net.layers, params, masks):
        lay.params = {k: v.copy() for k, v in p.items()}
        lay.masks = {k: v.copy() for k, v in m.items()}


def iterative_prune(net: NetworkGraph, fit_data: FeaturePairs,
                    quality_tolerance: float, prune_step: float,
                    fine_tune_epochs: int = 1, max_rounds: int | None = None,
                    seed: int = 0, mse_floor: float = 1e-6,
                    gate=None) -> PruneTrace:
    """Magnitude-prunes ``net`` in place while the quality gate holds.

    Each round masks ceil(prune_step * remaining) of the smallest unpruned
    weights, fine-tunes with pruned coordinates frozen at zero, and keeps
    the round only if held-out MSE stays within
    (1 + quality_tolerance) * unpruned MSE + mse_floor (or, when ``gate``
    is given, while gate(net) stays True).  A rejected round is rolled
    back; the trace of the last accepted state is returned.  The
    zero-rounds trace with fraction 1.0 is a valid outcome.
    """
    if not 0.0 < prune_step < 1.0:
        raise ValidationError(f"prune_step must lie in (0,1), got {prune_step}")
    val = (fit_data.x_val, fit_data.y_val)
    baseline = evaluate(net, val, loss="mean_squared_error").loss
    threshold = (1.0 + quality_tolerance) * baseline + mse_floor
    ft_cfg = TrainConfig(loss="mean_squared_error", learning_rate=0.02,
                         batch_size=64, max_epochs=fine_tune_epochs, seed=seed)
    rounds: list[tuple[float, float]] = []
    r = 0
    while max_rounds is None or r < max_rounds:
        r += 1
        remaining = sum(int(lay.masks[name].sum()) if name in lay.masks
                        else lay.params[name].size
                        for lay, name in _prunable(net))
        if remaining == 0:
            break
        k = min(remaining, math.ceil(prune_step * remaining))
        snap = _snapshot(net)
        _prune_smallest(net, k)
        if fine_tune_epochs > 0:
            train(net, (fit_data.x_train, fit_data.y_train),
                  replace(ft_cfg, seed=seed + r))
        val_mse = evaluate(net, val, loss="mean_squared_error").loss
        accepted = (gate(net) if gate is not None else val_mse <= threshold)
        if not accepted:
            _restore(net, snap)
            break
        rounds.append((1.0 - nonzero_fraction(net), val_mse))
    return PruneTrace(rounds=tuple(rounds),
                      final_nonzero_fraction=nonzero_fraction(net),
                      baseline_val_mse=baseline)


def _accuracy_gate(target: DictionaryEntry, pairs: FeaturePairs, epsilon: float):
    """End-task gate: composed features must still classify X_B well."""
    cut = target.feature_cut
    head = target.network.layers[cut:]

    def gate(net: NetworkGraph) -> bool:
        feats = net.forward(pairs.x_val)
        x = feats
        for lay in head:
            x, _ = lay.forward(x, want_cache=False)
        acc = float((x.argmax(axis=1) == pairs.labels_val).mean())
        return acc >= 1.0 - epsilon

    return gate


def dissimilarity(store: Dictionary, from_id: str, to_id: str,
                  epsilon: float, cfg: SimilarityConfig,
                  collections: dict[str, ImageCollection]) -> DistanceEntry:
    """Full directed distance d(from -> to): fit, prune, count survivors.

    ``collections`` maps source names to loaded image collections (the
    target task's source must be present).
    """
    source = store.get(from_id)
    target = store.get(to_id)
    if target.task.source not in collections:
        raise ValidationError(
            f"no collection loaded for source {target.task.source!r}")
    pairs = build_feature_pairs(source, target,
                                collections[target.task.source], cfg)
    job = TransformJob(source=source, target=target, pairs=pairs, cfg=cfg)
    net, _ = fit_transform(job)
    gate = None
    if cfg.gate == "accuracy":
        gate = _accuracy_gate(target, pairs, epsilon)
    elif cfg.gate != "mse":
        raise ValidationError(f"unknown gate {cfg.gate!r}; use 'mse' or 'accuracy'")
    trace = iterative_prune(net, pairs, cfg.quality_tolerance, cfg.prune_step,
                            cfg.fine_tune_epochs, cfg.max_rounds, cfg.seed,
                            cfg.mse_floor, gate)
    return DistanceEntry(from_task=from_id, to_task=to_id, epsilon=epsilon,
                         distance=trace.final_nonzero_fraction, trace=trace)


# -- distance matrix ----------------------------------------------------------

@dataclass
class DistanceMatrix:
    ids: list[str]
    epsilon: float
    entries: dict          # (from_id, to_id) -> DistanceEntry
    failures: list         # (from_id, to_id, message)

    def value(self, from_id: str, to_id: str) -> float | None:
        e = self.entries.get((from_id, to_id))
        return None if e is None else e.distance

    def as_array(self) -> np.ndarray:
        n = len(self.ids)
        out = np.full((n, n), np.nan)
        for i, a in enumerate(self.ids):
            for j, b in enumerate(self.ids):
                v = self.value(a, b)
                if v is not None:
                    out[i, j] = v
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["from_task", "to_task", "epsilon", "distance",
                        "rounds", "final_val_mse"])
            for a in self.ids:
                for b in self.ids:
                    e = self.entries.get((a, b))
                    if e is None:
                        w.writerow([a, b, f"{self.epsilon:.6f}", "", "", ""])
                    else:
                        w.writerow([a, b, f"{self.epsilon:.6f}",
                                    f"{e.distance:.6f}", len(e.trace.rounds),
                                    f"{e.trace.final_val_mse:.6e}"])

    def save_heatmap(self, path) -> None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        arr = self.as_array()
        n = len(self.ids)
        fig, ax = plt.subplots(figsize=(1.1 * n + 2.2, 1.1 * n + 1.2))
        im = ax.imshow(arr, cmap="viridis", vmin=0.0, vmax=1.0)
        ax.set_xticks(range(n), self.ids, rotation=45, ha="right")
        ax.set_yticks(range(n), self.ids)
        ax.set_xlabel("to task")
        ax.set_ylabel("from task")
        for i in range(n):
            for j in range(n):
                if np.isfinite(arr[i, j]):
                    ax.text(j, i, f"{arr[i, j]:.2f}", ha="center", va="center",
                            color="w" if arr[i, j] < 0.6 else "k", fontsize=8)
        fig.colorbar(im, ax=ax, fraction=0.046)
        fig.tight_layout()
        fig.savefig(path, dpi=120, metadata={"Software": None})
        plt.close(fig)


def distance_matrix(store: Dictionary, ids: list[str], epsilon: float,
                    cfg: SimilarityConfig,
                    collections: dict[str, ImageCollection]) -> DistanceMatrix:
    """Full directed |ids| x |ids| matrix; the diagonal is computed, never
    assumed zero.  A failing cell is recorded and skipped."""
    unknown = [i for i in ids if i not in store]
    if unknown:
        raise ValidationError(f"ids not in dictionary: {unknown}")
    entries = {}
    failures = []
    for to_id in ids:
        for from_id in ids:
            try:
                entries[(from_id, to_id)] = dissimilarity(
                    store, from_id, to_id, epsilon, cfg, collections)
            except (TrainingError, ValidationError) as e:
                failures.append((from_id, to_id, str(e)))
    return DistanceMatrix(ids=list(ids), epsilon=epsilon,
                          entries=entries, failures=failures)
