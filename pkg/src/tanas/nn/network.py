"""Network assembly, forward/backward evaluation, and SGD training.

A NetworkGraph is an ordered list of layers built from plain spec dicts
(see ``layers``).  Training is plain stochastic gradient descent with a
fixed learning rate; all randomness (init, shuffling) flows through
explicitly seeded generators, so a fixed seed reproduces final weights
bit-for-bit on the same platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError, ValidationError
from . import layers as L

_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run."""

    loss: str = "cross_entropy"  # or "mean_squared_error"
    learning_rate: float = 0.05
    batch_size: int = 64
    max_epochs: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("cross_entropy", "mean_squared_error"):
            raise ValidationError(f"unknown loss {self.loss!r}")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ValidationError("max_epochs must be >= 0")


@dataclass(frozen=True)
class Metrics:
    """Loss plus accuracy normalized to [0, 1] (1 = perfect).

    Accuracy is argmax agreement for classification; for pure regression
    targets it is reported as 0.0 and only the loss is meaningful.
    """

    loss: float
    accuracy: float

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValidationError(f"accuracy must lie in [0,1], got {self.accuracy}")


class NetworkGraph:
    """Ordered stack of layers with consistent shapes."""

    def __init__(self, layer_list, input_shape, dtype="float32", seed=0):
        self.layers = layer_list
        self.input_shape = tuple(input_shape)
        self.dtype = dtype
        self.seed = seed
        self.out_shape = layer_list[-1].out_shape
        if len(self.out_shape) != 1:
            raise ValidationError(
                f"network must end in a flat output, got shape {self.out_shape}")
        self.output_dim = self.out_shape[0]

    # -- evaluation ---------------------------------------------------------

    def forward(self, x):
        """Pure forward pass; never mutates weights."""
        x = np.asarray(x, dtype=_DTYPES[self.dtype])
        for lay in self.layers:
            x, _ = lay.forward(x, want_cache=False)
        return x

    def forward_cached(self, x):
        """Forward pass keeping per-layer caches for backward."""
        x = np.asarray(x, dtype=_DTYPES[self.dtype])
        caches = []
        for lay in self.layers:
            x, c = lay.forward(x, want_cache=True)
            caches.append(c)
        return x, caches

    def backward(self, dy, caches):
        """Backprop an output gradient; returns per-layer grad dicts."""
        grads = [None] * len(self.layers)
        for idx in range(len(self.layers) - 1, -1, -1):
            dy, g = self.layers[idx].backward(dy, caches[idx])
            grads[idx] = g
        return grads, dy

    def sgd_step(self, grads, lr):
        for lay, g in zip(self.layers, grads):
            for k, gk in g.items():
                lay.params[k] -= lr * gk
            if lay.masks:
                lay.apply_masks()

    # -- bookkeeping --------------------------------------------------------

    def parameter_count(self) -> int:
        return sum(lay.param_count() for lay in self.layers)

    def parameter_items(self):
        """Yields (layer_index, name, array) in deterministic order."""
        for idx, lay in enumerate(self.layers):
            for name in sorted(lay.params):
                yield idx, name, lay.params[name]

    def parameter_bytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(arr).tobytes()
                        for _, _, arr in self.parameter_items())

    def descriptors(self) -> list[dict]:
        return [lay.descriptor() for lay in self.layers]

    def clone(self) -> "NetworkGraph":
        """Deep copy: same architecture, independent weight arrays."""
        net = build_from_descriptors(self.descriptors(), self.input_shape,
                                     dtype=self.dtype, seed=self.seed)
        for (_, _, src), (_, _, dst) in zip(self.parameter_items(),
                                            net.parameter_items()):
            dst[...] = src
        for lay_src, lay_dst in zip(self.layers, net.layers):
            lay_dst.masks = {k: m.copy() for k, m in lay_src.masks.items()}
        return net


def _make_layer(desc: dict, in_shape, dtype, rng) -> L.Layer:
    kind = desc["kind"]
    np_dtype = _DTYPES[dtype]
    if kind == "conv":
        return L.Conv2D(in_shape, desc["out_channels"], tuple(desc["kernel"]),
                        tuple(desc["padding"]), desc.get("dilation", 1),
                        desc.get("bias", True), desc.get("activation"),
                        desc.get("pre_relu", False), np_dtype, rng)
    if kind == "dense":
        return L.Dense(in_shape, desc["units"], desc.get("bias", True),
                       desc.get("activation"), np_dtype, rng)
    if kind == "flatten":
        return L.Flatten(in_shape)
    if kind == "identity":
        return L.Identity(in_shape)
    if kind == "zero":
        return L.Zero(in_shape)
    if kind == "maxpool2x2":
        return L.MaxPool2x2(in_shape, desc.get("stride", 1))
    if kind == "global_avg_pool":
        return L.GlobalAvgPool(in_shape)
    if kind == "dil_conv3x3":
        return L._make_edge_op("dil_conv3x3", in_shape, np_dtype, rng)
    if kind == "sep_conv3x3":
        return L._make_edge_op("sep_conv3x3", in_shape, np_dtype, rng)
    if kind == "conv5x5":
        return L._make_edge_op("conv5x5", in_shape, np_dtype, rng)
    if kind == "cell":
        return L.Cell(in_shape, desc["num_nodes"], desc["edges"], np_dtype, rng)
    raise ValidationError(f"unknown layer kind {desc['kind']!r}")


def build_from_descriptors(specs, input_shape, dtype="float32", seed=0) -> NetworkGraph:
    """Assemble a network from spec dicts, inferring shapes layer to layer.

    A flatten layer is inserted automatically when a dense layer follows a
    spatial (C,H,W) output.  Unless a spec names an activation explicitly,
    conv/dense layers get ReLU except for the final layer, which stays
    linear (logits / regression output).
    """
    specs = [dict(s) for s in specs]
    if not specs:
        raise ValidationError("network spec is empty: at least one layer required")
    if dtype not in _DTYPES:
        raise ValidationError(f"dtype must be one of {sorted(_DTYPES)}, got {dtype!r}")
    rng = np.random.default_rng(seed)
    built: list[L.Layer] = []
    shape = tuple(int(d) for d in input_shape)
    for pos, desc in enumerate(specs):
        if desc["kind"] == "dense" and len(shape) != 1:
            built.append(L.Flatten(shape))
            shape = built[-1].out_shape
        if desc["kind"] in ("conv", "dense") and desc.get("activation") is None:
            desc["activation"] = "linear" if pos == len(specs) - 1 else "relu"
            if desc["activation"] == "linear":
                desc["activation"] = None
        try:
            lay = _make_layer(desc, shape, dtype, rng)
        except ValidationError as e:
            raise ValidationError(f"layer {pos} ({desc['kind']}): {e}") from e
        built.append(lay)
        shape = lay.out_shape
    if len(shape) != 1:
        built.append(L.Flatten(shape))
    return NetworkGraph(built, input_shape, dtype=dtype, seed=seed)


def build_network(spec, input_shape, *, dtype="float32", seed=0) -> NetworkGraph:
    """Public constructor; ``spec`` is a list of layer spec dicts."""
    return build_from_descriptors(spec, input_shape, dtype=dtype, seed=seed)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch.

    Returns (loss, dlogits, n_correct).  ``labels`` are integer class ids.
    """
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    sumexp = expz.sum(axis=1, keepdims=True)
    logp = z - np.log(sumexp)
    B = logits.shape[0]
    idx = np.arange(B)
    loss = -float(logp[idx, labels].mean())
    probs = expz / sumexp
    dlogits = probs
    dlogits[idx, labels] -= 1.0
    dlogits /= B
    n_correct = int((logits.argmax(axis=1) == labels).sum())
    return loss, dlogits.astype(logits.dtype), n_correct


def mean_squared_error(pred, target):
    """Mean over batch and output coordinates of squared error."""
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    dpred = (2.0 / diff.size) * diff
    return loss, dpred.astype(pred.dtype)


def _as_xy(data):
    """Accepts (X, y) tuples or any object with .images/.labels."""
    if isinstance(data, tuple):
        X, y = data
    else:
        X, y = data.images, data.labels
    return np.asarray(X), np.asarray(y)


def _batch_metrics(net: NetworkGraph, X, y, loss_kind, batch_size=512):
    total_loss = 0.0
    total_correct = 0
    n = X.shape[0]
    for start in range(0, n, batch_size):
        xb = X[start:start + batch_size]
        out = net.forward(xb)
        if loss_kind == "cross_entropy":
            loss, _, correct = softmax_cross_entropy(out, y[start:start + batch_size])
            total_correct += correct
        else:
            loss, _ = mean_squared_error(out, y[start:start + batch_size])
        total_loss += loss * xb.shape[0]
    acc = total_correct / n if loss_kind == "cross_entropy" else 0.0
    return Metrics(loss=total_loss / n, accuracy=acc)


def evaluate(net: NetworkGraph, data, loss: str = "cross_entropy") -> Metrics:
    """Pure evaluation over every sample; deterministic, never mutates weights."""
    X, y = _as_xy(data)
    if X.shape[0] == 0:
        raise ValidationError("evaluate needs at least one sample")
    return _batch_metrics(net, X, y, loss)


def train(net: NetworkGraph, data, cfg: TrainConfig) -> Metrics:
    """SGD training in place; returns metrics accumulated over the final epoch.

    Raises TrainingError with the epoch and batch index if the loss goes
    non-finite.  A zero learning rate leaves the weights untouched.
    """
    X, y = _as_xy(data)
    n = X.shape[0]
    if n == 0:
        raise ValidationError("train needs at least one sample")
    if cfg.loss == "cross_entropy":
        if y.ndim != 1:
            raise ValidationError("cross_entropy expects integer class labels")
        if int(y.max(initial=0)) >= net.output_dim:
            raise ValidationError(
                f"label {int(y.max())} out of range for output_dim {net.output_dim}")
    rng = np.random.default_rng(cfg.seed)
    final = Metrics(loss=float("nan"), accuracy=0.0)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        ep_loss = 0.0
        ep_correct = 0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            out, caches = net.forward_cached(xb)
            if cfg.loss == "cross_entropy":
                loss, dout, correct = softmax_cross_entropy(out, yb)
                ep_correct += correct
            else:
                loss, dout = mean_squared_error(out, yb)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {bi}")
            ep_loss += loss * xb.shape[0]
            if cfg.learning_rate != 0.0:
                grads, _ = net.backward(dout, caches)
                net.sgd_step(grads, cfg.learning_rate)
        final = Metrics(loss=ep_loss / n,
                        accuracy=ep_correct / n if cfg.loss == "cross_entropy" else 0.0)
    if cfg.max_epochs == 0:
        final = _batch_metrics(net, X, y, cfg.loss)
    return final


def penultimate_features(net: NetworkGraph, inputs, cut: int | None = None):
    """Activations after the network's feature cut.

    The default cut sits just after the second parametric layer (for the
    representative stack conv -> dense(1024) -> dense(2) that is the 1024-wide
    hidden activation).  Pass ``cut`` to override with an explicit layer index
    (features are the output of ``layers[cut - 1]``).
    """
    if cut is None:
        cut = default_feature_cut(net)
    x = np.asarray(inputs, dtype=_DTYPES[net.dtype])
    for lay in net.layers[:cut]:
        x, _ = lay.forward(x, want_cache=False)
    return x


def default_feature_cut(net: NetworkGraph) -> int:
    """Index just past the second parametric layer."""
    seen = 0
    for idx, lay in enumerate(net.layers):
        if lay.params:
            seen += 1
            if seen == 2:
                return idx + 1
    raise ValidationError(
        "network has fewer than two parametric layers; no penultimate features")
