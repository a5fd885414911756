"""Finite-difference validation of the hand-written backward passes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .network import NetworkGraph, mean_squared_error, softmax_cross_entropy

MAX_PARAMS = 10_000


@dataclass
class GradCheckResult:
    ok: bool
    max_rel_error: float
    worst: tuple[int, str, int] | None  # (layer index, param name, flat index)
    report: str

    def __bool__(self) -> bool:
        return self.ok


def _loss_of(net: NetworkGraph, X, y, loss_kind: str) -> float:
    out = net.forward(X)
    if loss_kind == "cross_entropy":
        val, _, _ = softmax_cross_entropy(out, y)
    else:
        val, _ = mean_squared_error(out, y)
    return val


def gradient_check(net: NetworkGraph, data, tolerance: float,
                   loss: str = "cross_entropy", step: float = 1e-5) -> GradCheckResult:
    """Compare analytic gradients against central finite differences.

    Every parameter coordinate is perturbed by +-step.  A coordinate passes
    when |analytic - numeric| <= tolerance * max(|analytic|, |numeric|) + 1e-10
    (the absolute floor lets all-zero gradients pass exactly).  Only for
    networks up to 10^4 parameters; larger nets are refused.
    """
    if net.parameter_count() > MAX_PARAMS:
        raise ValidationError(
            f"gradient_check limited to {MAX_PARAMS} parameters; "
            f"network has {net.parameter_count()}")
    X, y = data
    X = np.asarray(X)
    y = np.asarray(y)

    out, caches = net.forward_cached(X)
    if loss == "cross_entropy":
        _, dout, _ = softmax_cross_entropy(out, y)
    else:
        _, dout = mean_squared_error(out, y)
    analytic, _ = net.backward(dout, caches)

    worst = None
    worst_rel = 0.0
    ok = True
    for li, lay in enumerate(net.layers):
        for name in sorted(lay.params):
            p = lay.params[name]
            g = analytic[li][name]
            flat = p.reshape(-1)
            gflat = np.asarray(g).reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                plus = _loss_of(net, X, y, loss)
                flat[k] = orig - step
                minus = _loss_of(net, X, y, loss)
                flat[k] = orig
                numeric = (plus - minus) / (2.0 * step)
                a = float(gflat[k])
                denom = max(abs(a), abs(numeric))
                err = abs(a - numeric)
                rel = err / denom if denom > 0 else 0.0
                if err > tolerance * denom + 1e-10:
                    ok = False
                    if rel > worst_rel:
                        worst_rel = rel
                        worst = (li, name, k)
                else:
                    worst_rel = max(worst_rel, rel if denom > 0 else 0.0)
    if ok:
        report = f"all gradients match within rel tol {tolerance} (max rel err {worst_rel:.3e})"
    else:
        li, name, k = worst
        report = (f"gradient mismatch at layer {li} param {name!r} index {k}: "
                  f"max rel err {worst_rel:.3e} > {tolerance}")
    return GradCheckResult(ok=ok, max_rel_error=worst_rel, worst=worst, report=report)
