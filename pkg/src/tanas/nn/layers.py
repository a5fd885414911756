"""Operation catalog and layer implementations.

Everything is plain NumPy with hand-written backward passes.  Tensors are
batch-first: images are (B, C, H, W), flat features are (B, D).  Each layer
owns its parameters in ``self.params`` (name -> ndarray) and, when pruned,
a 0/1 mask per parameter in ``self.masks`` that training must re-apply
after every update.

Conventions baked into the catalog:

* Cell-safe operations preserve (C, H, W) exactly; padding is chosen so
  spatial size never changes inside a cell.
* ``identity`` and ``zero`` are exact (no activation, no parameters).
* Convolution-family catalog ops (dil_conv3x3, sep_conv3x3, conv5x5 inside
  cells) apply ReLU to their input before convolving, so stacking them adds
  nonlinearity while identity edges stay exact passthroughs.
* Weight and bias init is fan-in-scaled uniform:
  U(-1/sqrt(fan_in), +1/sqrt(fan_in)).  Nonzero bias init keeps
  pre-activations off the exact ReLU kink, which finite-difference
  gradient validation is sensitive to.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError

# The full operation catalog.  The first six are safe to use on cell edges
# (shape-preserving); dense/flatten only appear in plain feedforward specs.
OPERATION_KINDS = (
    "identity",
    "zero",
    "dil_conv3x3",
    "sep_conv3x3",
    "maxpool2x2",
    "conv5x5",
    "dense",
    "flatten",
)
CELL_SAFE_OPS = OPERATION_KINDS[:6]
PARAMETER_FREE_OPS = ("identity", "zero", "maxpool2x2", "flatten")


def _uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _relu_fwd(z):
    return np.maximum(z, 0.0)


# ---------------------------------------------------------------------------
# Layer spec factories.  A spec is a plain dict with a "kind" key; these are
# the descriptors build_network consumes and checkpoints persist.
# ---------------------------------------------------------------------------

def conv(out_channels: int, kh: int, kw: int | None = None, *, padding=0,
         dilation: int = 1, bias: bool = True, activation: str | None = None) -> dict:
    """Standard 2D convolution spec (stride 1)."""
    if kw is None:
        kw = kh
    if isinstance(padding, int):
        padding = (padding, padding)
    return {"kind": "conv", "out_channels": int(out_channels), "kernel": [int(kh), int(kw)],
            "padding": [int(padding[0]), int(padding[1])], "dilation": int(dilation),
            "bias": bool(bias), "activation": activation}


def dense(units: int, *, bias: bool = True, activation: str | None = None) -> dict:
    return {"kind": "dense", "units": int(units), "bias": bool(bias), "activation": activation}


def flatten() -> dict:
    return {"kind": "flatten"}


def identity_op() -> dict:
    return {"kind": "identity"}


def zero_op() -> dict:
    return {"kind": "zero"}


def maxpool2x2(stride: int = 1) -> dict:
    """2x2 max pool; stride 1 preserves spatial size (right/bottom padding)."""
    return {"kind": "maxpool2x2", "stride": int(stride)}


def dil_conv3x3() -> dict:
    """Channel-preserving 3x3 convolution, dilation 2, padding 2."""
    return {"kind": "dil_conv3x3"}


def sep_conv3x3() -> dict:
    """Channel-preserving depthwise 3x3 (padding 1) + pointwise 1x1."""
    return {"kind": "sep_conv3x3"}


def conv5x5() -> dict:
    """Channel-preserving 5x5 convolution, padding 2 (cell form)."""
    return {"kind": "conv5x5"}


def global_avg_pool() -> dict:
    return {"kind": "global_avg_pool"}


def cell(num_nodes: int, edges, channels: int) -> dict:
    """Cell spec: operation-labeled DAG over ``num_nodes`` nodes.

    ``edges`` is an iterable of (from_node, to_node, op_kind) with from < to.
    Node 0 is the cell input; the cell output is the concatenation of nodes
    1..n-1 reduced back to ``channels`` by a bias-free 1x1 convolution.
    """
    return {"kind": "cell", "num_nodes": int(num_nodes),
            "edges": [[int(i), int(j), str(op)] for (i, j, op) in edges],
            "channels": int(channels)}


# ---------------------------------------------------------------------------
# Functional conv/pool primitives shared by plain layers and cell edges.
# ---------------------------------------------------------------------------

def _conv2d_fwd(x, W, b, padding, dilation):
    """x (B,Ci,H,W), W (Co,Ci,kh,kw) -> y (B,Co,Ho,Wo). Stride is always 1."""
    B, Ci, H, Wd = x.shape
    Co, _, kh, kw = W.shape
    ph, pw = padding
    d = dilation
    Ho = H + 2 * ph - d * (kh - 1)
    Wo = Wd + 2 * pw - d * (kw - 1)
    if Ho <= 0 or Wo <= 0:
        raise ValidationError(
            f"convolution output would be empty: input {H}x{Wd}, kernel {kh}x{kw}, "
            f"padding {ph}x{pw}, dilation {d}")
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    y = np.zeros((B, Co, Ho, Wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i * d:i * d + Ho, j * d:j * d + Wo]
            # (B,Ho,Wo,Co) <- (B,Ci,Ho,Wo) . (Co,Ci)
            y += np.tensordot(xs, W[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
    if b is not None:
        y += b.reshape(1, Co, 1, 1)
    return y, xp


def _conv2d_bwd(dy, xp, W, padding, dilation, x_shape, want_bias):
    B, Ci, H, Wd = x_shape
    Co, _, kh, kw = W.shape
    ph, pw = padding
    d = dilation
    Ho, Wo = dy.shape[2], dy.shape[3]
    dW = np.zeros_like(W)
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i * d:i * d + Ho, j * d:j * d + Wo]
            dW[:, :, i, j] = np.tensordot(dy, xs, axes=([0, 2, 3], [0, 2, 3]))
            dxp[:, :, i * d:i * d + Ho, j * d:j * d + Wo] += (
                np.tensordot(dy, W[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2))
    db = dy.sum(axis=(0, 2, 3)) if want_bias else None
    dx = dxp[:, :, ph:ph + H, pw:pw + Wd] if (ph or pw) else dxp
    return dx, dW, db


def _depthwise3x3_fwd(x, W, padding):
    """x (B,C,H,W), W (C,3,3) -> y (B,C,H,W) for padding 1."""
    B, C, H, Wd = x.shape
    p = padding
    Ho, Wo = H + 2 * p - 2, Wd + 2 * p - 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    y = np.zeros((B, C, Ho, Wo), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            y += xp[:, :, i:i + Ho, j:j + Wo] * W[:, i, j].reshape(1, C, 1, 1)
    return y, xp


def _depthwise3x3_bwd(dy, xp, W, padding, x_shape):
    B, C, H, Wd = x_shape
    p = padding
    Ho, Wo = dy.shape[2], dy.shape[3]
    dW = np.zeros_like(W)
    dxp = np.zeros_like(xp)
    for i in range(3):
        for j in range(3):
            xs = xp[:, :, i:i + Ho, j:j + Wo]
            dW[:, i, j] = (dy * xs).sum(axis=(0, 2, 3))
            dxp[:, :, i:i + Ho, j:j + Wo] += dy * W[:, i, j].reshape(1, C, 1, 1)
    return dxp[:, :, p:p + H, p:p + Wd], dW


def _maxpool2x2_fwd(x, stride):
    """2x2 max pool. stride=1 pads right/bottom so output size == input size."""
    B, C, H, W = x.shape
    if stride == 1:
        pad = ((0, 0), (0, 0), (0, 1), (0, 1))
        xp = np.pad(x, pad, constant_values=-np.inf)
        Ho, Wo = H, W
    else:
        if H % 2 or W % 2:
            raise ValidationError(f"maxpool2x2 stride 2 needs even spatial dims, got {H}x{W}")
        xp = x
        Ho, Wo = H // 2, W // 2
    views = [xp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride]
             for i in range(2) for j in range(2)]
    stack = np.stack(views)
    y = stack.max(axis=0)
    arg = stack.argmax(axis=0).astype(np.int8)
    return y, arg


def _maxpool2x2_bwd(dy, arg, stride, x_shape):
    B, C, H, W = x_shape
    Ho, Wo = dy.shape[2], dy.shape[3]
    if stride == 1:
        dxp = np.zeros((B, C, H + 1, W + 1), dtype=dy.dtype)
    else:
        dxp = np.zeros((B, C, H, W), dtype=dy.dtype)
    k = 0
    for i in range(2):
        for j in range(2):
            sel = dy * (arg == k)
            dxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += sel
            k += 1
    return dxp[:, :, :H, :W]


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

class Layer:
    """Base layer: owns params/masks, reports shapes, runs fwd/bwd."""

    kind = "base"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.masks: dict[str, np.ndarray] = {}

    # subclasses set these in __init__
    in_shape: tuple
    out_shape: tuple

    def forward(self, x, want_cache: bool = False):
        """Returns (y, cache); cache is None when want_cache is False."""
        raise NotImplementedError

    def backward(self, dy, cache):
        """Returns (dx, grads) where grads maps param name -> gradient."""
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def apply_masks(self) -> None:
        for k, m in self.masks.items():
            np.multiply(self.params[k], m, out=self.params[k])


class Identity(Layer):
    kind = "identity"

    def __init__(self, in_shape):
        super().__init__()
        self.in_shape = self.out_shape = tuple(in_shape)

    def forward(self, x, want_cache=False):
        return x, None

    def backward(self, dy, cache):
        return dy, {}

    def descriptor(self):
        return {"kind": "identity"}


class Zero(Layer):
    kind = "zero"

    def __init__(self, in_shape):
        super().__init__()
        self.in_shape = self.out_shape = tuple(in_shape)

    def forward(self, x, want_cache=False):
        return np.zeros_like(x), None

    def backward(self, dy, cache):
        return np.zeros_like(dy), {}

    def descriptor(self):
        return {"kind": "zero"}


class Flatten(Layer):
    kind = "flatten"

    def __init__(self, in_shape):
        super().__init__()
        self.in_shape = tuple(in_shape)
        self.out_shape = (int(np.prod(in_shape)),)

    def forward(self, x, want_cache=False):
        return x.reshape(x.shape[0], -1), None

    def backward(self, dy, cache):
        return dy.reshape(dy.shape[0], *self.in_shape), {}

    def descriptor(self):
        return {"kind": "flatten"}


class GlobalAvgPool(Layer):
    kind = "global_avg_pool"

    def __init__(self, in_shape):
        super().__init__()
        if len(in_shape) != 3:
            raise ValidationError(f"global_avg_pool needs (C,H,W) input, got {in_shape}")
        self.in_shape = tuple(in_shape)
        self.out_shape = (in_shape[0],)

    def forward(self, x, want_cache=False):
        return x.mean(axis=(2, 3)), None

    def backward(self, dy, cache):
        C, H, W = self.in_shape
        dx = np.broadcast_to(dy[:, :, None, None], (dy.shape[0], C, H, W)) / (H * W)
        return dx.astype(dy.dtype), {}

    def descriptor(self):
        return {"kind": "global_avg_pool"}


class MaxPool2x2(Layer):
    kind = "maxpool2x2"

    def __init__(self, in_shape, stride: int = 1):
        super().__init__()
        if len(in_shape) != 3:
            raise ValidationError(f"maxpool2x2 needs (C,H,W) input, got {in_shape}")
        C, H, W = in_shape
        self.stride = stride
        self.in_shape = tuple(in_shape)
        if stride == 1:
            self.out_shape = (C, H, W)
        elif stride == 2:
            if H % 2 or W % 2:
                raise ValidationError(f"maxpool2x2 stride 2 needs even dims, got {H}x{W}")
            self.out_shape = (C, H // 2, W // 2)
        else:
            raise ValidationError(f"maxpool2x2 stride must be 1 or 2, got {stride}")

    def forward(self, x, want_cache=False):
        y, arg = _maxpool2x2_fwd(x, self.stride)
        return y, (arg if want_cache else None)

    def backward(self, dy, cache):
        dx = _maxpool2x2_bwd(dy, cache, self.stride, (dy.shape[0],) + self.in_shape)
        return dx, {}

    def descriptor(self):
        return {"kind": "maxpool2x2", "stride": self.stride}


class Conv2D(Layer):
    """Stride-1 2D convolution with optional dilation and fused ReLU.

    ``pre_relu=True`` applies ReLU to the *input* instead (used on cell
    edges so identity edges stay exact while conv edges are nonlinear).
    """

    kind = "conv"

    def __init__(self, in_shape, out_channels, kernel, padding, dilation=1,
                 bias=True, activation=None, pre_relu=False, dtype=np.float32,
                 rng: np.random.Generator | None = None):
        super().__init__()
        if len(in_shape) != 3:
            raise ValidationError(f"conv needs (C,H,W) input, got {in_shape}")
        Ci, H, W = in_shape
        kh, kw = kernel
        ph, pw = padding
        Ho = H + 2 * ph - dilation * (kh - 1)
        Wo = W + 2 * pw - dilation * (kw - 1)
        if Ho <= 0 or Wo <= 0:
            raise ValidationError(
                f"conv kernel {kh}x{kw} (dilation {dilation}, padding {ph},{pw}) "
                f"does not fit input {H}x{W}")
        self.in_shape = tuple(in_shape)
        self.out_shape = (out_channels, Ho, Wo)
        self.kernel = (kh, kw)
        self.padding = (ph, pw)
        self.dilation = dilation
        self.use_bias = bias
        self.activation = activation
        self.pre_relu = pre_relu
        rng = rng or np.random.default_rng(0)
        fan_in = Ci * kh * kw
        self.params["W"] = _uniform_init(rng, (out_channels, Ci, kh, kw), fan_in, dtype)
        if bias:
            self.params["b"] = _uniform_init(rng, (out_channels,), fan_in, dtype)

    def forward(self, x, want_cache=False):
        xin = _relu_fwd(x) if self.pre_relu else x
        y, xp = self._fwd(xin)
        z = y
        if self.activation == "relu":
            y = _relu_fwd(z)
        cache = (x, xp, z) if want_cache else None
        return y, cache

    def _fwd(self, xin):
        return _conv2d_fwd(xin, self.params["W"], self.params.get("b"),
                           self.padding, self.dilation)

    def backward(self, dy, cache):
        x, xp, z = cache
        if self.activation == "relu":
            dy = dy * (z > 0)
        dx, dW, db = _conv2d_bwd(dy, xp, self.params["W"], self.padding,
                                 self.dilation, (x.shape[0],) + self.in_shape,
                                 self.use_bias)
        if self.pre_relu:
            dx = dx * (x > 0)
        grads = {"W": dW}
        if self.use_bias:
            grads["b"] = db
        return dx, grads

    def descriptor(self):
        return {"kind": "conv", "out_channels": self.out_shape[0],
                "kernel": list(self.kernel), "padding": list(self.padding),
                "dilation": self.dilation, "bias": self.use_bias,
                "activation": self.activation, "pre_relu": self.pre_relu}


class SepConv3x3(Layer):
    """Depthwise 3x3 (padding 1) followed by pointwise 1x1; pre-ReLU input."""

    kind = "sep_conv3x3"

    def __init__(self, in_shape, dtype=np.float32, rng=None):
        super().__init__()
        C, H, W = in_shape
        self.in_shape = self.out_shape = tuple(in_shape)
        rng = rng or np.random.default_rng(0)
        self.params["dw"] = _uniform_init(rng, (C, 3, 3), 9, dtype)
        self.params["pw"] = _uniform_init(rng, (C, C, 1, 1), C, dtype)
        self.params["b"] = _uniform_init(rng, (C,), C, dtype)

    def forward(self, x, want_cache=False):
        xin = _relu_fwd(x)
        h, xp = _depthwise3x3_fwd(xin, self.params["dw"], 1)
        y, hp = _conv2d_fwd(h, self.params["pw"], self.params["b"], (0, 0), 1)
        cache = (x, xp, hp) if want_cache else None
        return y, cache

    def backward(self, dy, cache):
        x, xp, hp = cache
        B = x.shape[0]
        dh, dpw, db = _conv2d_bwd(dy, hp, self.params["pw"], (0, 0), 1,
                                  (B,) + self.in_shape, True)
        dxin, ddw = _depthwise3x3_bwd(dh, xp, self.params["dw"], 1, (B,) + self.in_shape)
        dx = dxin * (x > 0)
        return dx, {"dw": ddw, "pw": dpw, "b": db}

    def descriptor(self):
        return {"kind": "sep_conv3x3"}


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_shape, units, bias=True, activation=None,
                 dtype=np.float32, rng=None):
        super().__init__()
        if len(in_shape) != 1:
            raise ValidationError(
                f"dense needs flat (D,) input, got {in_shape}; add a flatten layer")
        self.in_shape = tuple(in_shape)
        self.out_shape = (units,)
        self.use_bias = bias
        self.activation = activation
        rng = rng or np.random.default_rng(0)
        self.params["W"] = _uniform_init(rng, (in_shape[0], units), in_shape[0], dtype)
        if bias:
            self.params["b"] = _uniform_init(rng, (units,), in_shape[0], dtype)

    def forward(self, x, want_cache=False):
        z = x @ self.params["W"]
        if self.use_bias:
            z = z + self.params["b"]
        y = _relu_fwd(z) if self.activation == "relu" else z
        cache = (x, z) if want_cache else None
        return y, cache

    def backward(self, dy, cache):
        x, z = cache
        if self.activation == "relu":
            dy = dy * (z > 0)
        grads = {"W": x.T @ dy}
        if self.use_bias:
            grads["b"] = dy.sum(axis=0)
        dx = dy @ self.params["W"].T
        return dx, grads

    def descriptor(self):
        return {"kind": "dense", "units": self.out_shape[0], "bias": self.use_bias,
                "activation": self.activation}


# Cell edge operations: constructors keyed by catalog name.  Each takes the
# per-node feature shape and returns a shape-preserving Layer.

def _make_edge_op(op: str, shape, dtype, rng) -> Layer:
    C = shape[0]
    if op == "identity":
        return Identity(shape)
    if op == "zero":
        return Zero(shape)
    if op == "maxpool2x2":
        return MaxPool2x2(shape, stride=1)
    if op == "dil_conv3x3":
        return Conv2D(shape, C, (3, 3), (2, 2), dilation=2, bias=True,
                      activation=None, pre_relu=True, dtype=dtype, rng=rng)
    if op == "sep_conv3x3":
        return SepConv3x3(shape, dtype=dtype, rng=rng)
    if op == "conv5x5":
        return Conv2D(shape, C, (5, 5), (2, 2), dilation=1, bias=True,
                      activation=None, pre_relu=True, dtype=dtype, rng=rng)
    raise ValidationError(f"operation {op!r} is not cell-safe "
                          f"(choose from {CELL_SAFE_OPS})")


class Cell(Layer):
    """Operation-labeled DAG over n nodes with a 1x1 output projection.

    Node 0 is the input.  Node j (j >= 1) is the elementwise sum of its
    incoming edge outputs.  The cell output concatenates nodes 1..n-1 on
    the channel axis and reduces back to ``channels`` with a bias-free 1x1
    convolution, so an all-zero cell emits exactly zero.
    """

    kind = "cell"

    def __init__(self, in_shape, num_nodes, edges, dtype=np.float32, rng=None):
        super().__init__()
        if len(in_shape) != 3:
            raise ValidationError(f"cell needs (C,H,W) input, got {in_shape}")
        C = in_shape[0]
        self.num_nodes = num_nodes
        self.in_shape = self.out_shape = tuple(in_shape)
        rng = rng or np.random.default_rng(0)

        self.edges = sorted(((int(i), int(j), str(op)) for i, j, op in edges),
                            key=lambda e: (e[1], e[0], e[2]))
        for (i, j, op) in self.edges:
            if not (0 <= i < j < num_nodes):
                raise ValidationError(f"cell edge ({i},{j}) is not forward in {num_nodes} nodes")
        self._ops: list[Layer] = []
        for k, (i, j, op) in enumerate(self.edges):
            sub = _make_edge_op(op, in_shape, dtype, rng)
            self._ops.append(sub)
            for name, arr in sub.params.items():
                self.params[f"e{k}.{name}"] = arr
        self.params["proj.W"] = _uniform_init(
            rng, (C, (num_nodes - 1) * C, 1, 1), (num_nodes - 1) * C, dtype)

    def _sync_subparams(self):
        # params may be replaced wholesale (checkpoint load, gradient probing);
        # push the canonical arrays back into the edge sublayers.
        for k, (i, j, op) in enumerate(self.edges):
            sub = self._ops[k]
            for name in sub.params:
                sub.params[name] = self.params[f"e{k}.{name}"]

    def forward(self, x, want_cache=False):
        self._sync_subparams()
        n = self.num_nodes
        values = [x] + [None] * (n - 1)
        edge_caches = [None] * len(self.edges)
        for k, ((i, j, _), op_layer) in enumerate(zip(self.edges, self._ops)):
            out, ec = op_layer.forward(values[i], want_cache)
            edge_caches[k] = ec
            if values[j] is None:
                values[j] = out
            else:
                values[j] = values[j] + out
        for j in range(1, n):
            if values[j] is None:
                values[j] = np.zeros_like(x)
        cat = np.concatenate(values[1:], axis=1)
        y, catp = _conv2d_fwd(cat, self.params["proj.W"], None, (0, 0), 1)
        cache = (edge_caches, cat, x.shape) if want_cache else None
        return y, cache

    def backward(self, dy, cache):
        edge_caches, cat, x_shape = cache
        n = self.num_nodes
        C = self.in_shape[0]
        dcat, dprojW, _ = _conv2d_bwd(dy, cat, self.params["proj.W"], (0, 0), 1,
                                      cat.shape, False)
        grads = {"proj.W": dprojW}
        dnodes = [None] * n
        for j in range(1, n):
            dnodes[j] = dcat[:, (j - 1) * C:j * C]
        dnodes[0] = np.zeros((x_shape[0],) + self.in_shape, dtype=dy.dtype)
        # reverse topological order: by the time node j is expanded, all
        # gradient flowing into it from later nodes has been accumulated
        for k in range(len(self.edges) - 1, -1, -1):
            i, j, _ = self.edges[k]
            dxi, sub_grads = self._ops[k].backward(dnodes[j], edge_caches[k])
            if i == 0:
                dnodes[0] += dxi
            else:
                dnodes[i] = dnodes[i] + dxi
            for name, g in sub_grads.items():
                grads[f"e{k}.{name}"] = g
        return dnodes[0], grads

    def descriptor(self):
        return {"kind": "cell", "num_nodes": self.num_nodes,
                "edges": [[i, j, op] for (i, j, op) in self.edges],
                "channels": self.in_shape[0]}
