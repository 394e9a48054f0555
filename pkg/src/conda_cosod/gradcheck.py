"""Central-difference gradient oracle and per-op probes."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import ops
from .tensor import OPS, NonFiniteError, Tensor


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max over parameter entries of |analytic - numeric| / max(1, |numeric|).

    ``f`` is re-evaluated for every probe and must be deterministic.  With
    a positive ``max_entries`` only a random subset of entries per parameter is probed.
    """
    for p in params:
        if p.dtype != np.float64:
            raise TypeError("grad_check needs float64 parameters")
        p.grad = None
    out = f()
    if out.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    out.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.data
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries and flat.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + eps
            plus = float(f().data)
            flat[k] = orig - eps
            minus = float(f().data)
            flat[k] = orig
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NonFiniteError(f"non-finite value while probing entry {k}")
            numeric = (plus - minus) / (2 * eps)
            err = abs(analytic.reshape(-1)[k] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


def _weighted_sum(out: Tensor, seed: int) -> Tensor:
    w = np.random.default_rng(seed).standard_normal(out.shape)
    return ops.sum(ops.mul(out, Tensor(w)))


def _leaf(rng, shape, low=None, high=None) -> Tensor:
    if low is None:
        data = rng.standard_normal(shape)
    else:
        data = rng.uniform(low, high, size=shape)
    return Tensor(data, requires_grad=True)


def _away_from_zero(rng, shape, margin=0.05) -> Tensor:
    x = rng.standard_normal(shape)
    x = np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin * 2, x)
    return Tensor(x, requires_grad=True)


def _rand_shape(rng, ndim, lo=1, hi=4):
    return tuple(int(v) for v in rng.integers(lo, hi + 1, size=ndim))


def _probe_binary(name):
    def probe(rng):
        shape = _rand_shape(rng, int(rng.integers(1, 4)))
        a = _leaf(rng, shape)
        bshape = shape[-1:] if rng.random() < 0.5 else shape
        if name == "div":
            b = Tensor(rng.uniform(0.5, 2.0, size=bshape) * rng.choice([-1, 1], size=bshape),
                       requires_grad=True)
        else:
            b = _leaf(rng, bshape)
        fn = getattr(ops, name)
        return (lambda: fn(a, b)), [a, b]

    return probe


def _probe_unary(fn, low=None, high=None, kink=False):
    def probe(rng):
        shape = _rand_shape(rng, int(rng.integers(1, 4)))
        x = _away_from_zero(rng, shape) if kink else _leaf(rng, shape, low, high)
        return (lambda: fn(x)), [x]

    return probe


def _probe_clamp(rng):
    shape = _rand_shape(rng, 2)
    x = Tensor(rng.uniform(-2, 2, size=shape), requires_grad=True)
    # keep entries away from the clip boundaries
    x.data[np.abs(np.abs(x.data) - 1.0) < 0.05] = 0.3
    return (lambda: ops.clamp(x, -1.0, 1.0)), [x]


def _probe_reduce(name):
    def probe(rng):
        shape = _rand_shape(rng, 3)
        x = _leaf(rng, shape)
        axis = int(rng.integers(0, 3)) if rng.random() < 0.7 else None
        keep = bool(rng.random() < 0.5)
        fn = getattr(ops, name)
        return (lambda: fn(x, axis=axis, keepdims=keep)), [x]

    return probe


def _probe_reshape(rng):
    shape = _rand_shape(rng, 3)
    x = _leaf(rng, shape)
    return (lambda: ops.reshape(x, (-1,))), [x]


def _probe_transpose(rng):
    shape = _rand_shape(rng, 3)
    x = _leaf(rng, shape)
    axes = tuple(int(a) for a in rng.permutation(3))
    return (lambda: ops.transpose(x, axes)), [x]


def _probe_getitem(rng):
    shape = _rand_shape(rng, 3, 2, 4)
    x = _leaf(rng, shape)
    return (lambda: x[1:, ..., 0]), [x]


def _probe_stack(rng):
    shape = _rand_shape(rng, 2)
    xs = [_leaf(rng, shape) for _ in range(3)]
    axis = int(rng.integers(0, 3))
    return (lambda: ops.stack(xs, axis=axis)), xs


def _probe_concat(rng):
    shape = _rand_shape(rng, 2)
    xs = [_leaf(rng, shape) for _ in range(2)]
    return (lambda: ops.concat(xs, axis=1)), xs


def _probe_matmul(rng):
    m, k, n = _rand_shape(rng, 3)
    batch = _rand_shape(rng, 1)
    a = _leaf(rng, batch + (m, k))
    b = _leaf(rng, (k, n))
    return (lambda: ops.matmul(a, b)), [a, b]


def _probe_linear(rng):
    lead = _rand_shape(rng, 2)
    cin, cout = _rand_shape(rng, 2)
    x = _leaf(rng, lead + (cin,))
    w = _leaf(rng, (cin, cout))
    b = _leaf(rng, (cout,))
    return (lambda: ops.linear(x, w, b)), [x, w, b]


def _probe_l2(rng):
    shape = _rand_shape(rng, 2) + (int(rng.integers(2, 5)),)
    x = _leaf(rng, shape)
    return (lambda: ops.l2_normalize(x)), [x]


def _probe_conv(rng):
    n = int(rng.integers(1, 3))
    h, w = _rand_shape(rng, 2, 3, 6)
    cin, cout = _rand_shape(rng, 2, 1, 3)
    k = int(rng.choice([1, 3]))
    stride = int(rng.choice([1, 2]))
    padding = str(rng.choice(["same", "valid"]))
    x = _leaf(rng, (n, h, w, cin))
    kern = _leaf(rng, (k, k, cin, cout))
    b = _leaf(rng, (cout,))
    return (lambda: ops.conv2d(x, kern, b, stride=stride, padding=padding)), [x, kern, b]


def _probe_maxpool(rng):
    n, hh, ww, c = _rand_shape(rng, 4, 1, 3)
    x = Tensor(rng.permutation(n * hh * 2 * ww * 2 * c).reshape(n, hh * 2, ww * 2, c) * 0.1,
               requires_grad=True)
    return (lambda: ops.max_pool2d(x, 2)), [x]


def _probe_resize(rng):
    lead = _rand_shape(rng, 1)
    h, w = _rand_shape(rng, 2, 1, 6)
    c = int(rng.integers(1, 3))
    oh, ow = _rand_shape(rng, 2, 1, 7)
    x = _leaf(rng, lead + (h, w, c))
    return (lambda: ops.bilinear_resize(x, oh, ow)), [x]


def _probe_gather(rng):
    b = int(rng.integers(1, 3))
    h, w = _rand_shape(rng, 2, 2, 5)
    c = int(rng.integers(1, 3))
    p = int(rng.integers(1, 6))
    values = _leaf(rng, (b, h, w, c))
    coords = rng.uniform(-0.8, max(h, w) - 0.2, size=(b, p, 2))
    # stay clear of integer kinks and the clamp boundary
    frac = coords - np.floor(coords)
    coords = np.where(np.abs(frac - 0.5) > 0.4, np.floor(coords) + 0.5, coords)
    coords = Tensor(coords, requires_grad=True)
    return (lambda: ops.bilinear_gather(values, coords)), [values, coords]


PROBES: dict[str, Callable] = {
    "add": _probe_binary("add"),
    "sub": _probe_binary("sub"),
    "mul": _probe_binary("mul"),
    "div": _probe_binary("div"),
    "scale": lambda rng: (lambda x: ((lambda: ops.scale(x, -1.7)), [x]))(_leaf(rng, _rand_shape(rng, 2))),
    "relu": _probe_unary(ops.relu, kink=True),
    "sigmoid": _probe_unary(ops.sigmoid),
    "tanh": _probe_unary(ops.tanh),
    "log": _probe_unary(ops.log, 0.2, 3.0),
    "clamp": _probe_clamp,
    "sum": _probe_reduce("sum"),
    "mean": _probe_reduce("mean"),
    "reshape": _probe_reshape,
    "transpose": _probe_transpose,
    "getitem": _probe_getitem,
    "stack": _probe_stack,
    "concat": _probe_concat,
    "matmul": _probe_matmul,
    "linear": _probe_linear,
    "l2_normalize": _probe_l2,
    "conv2d": _probe_conv,
    "max_pool2d": _probe_maxpool,
    "bilinear_resize": _probe_resize,
    "bilinear_gather": _probe_gather,
}


def check_op(name: str, trials: int = 20, seed: int = 0) -> float:
    """Worst relative error of op ``name`` over ``trials`` random shapes."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        fn, params = PROBES[name](rng)
        err = grad_check(lambda: _weighted_sum(fn(), t), params)
        worst = max(worst, err)
    return worst


def check_all_ops(trials: int = 20, seed: int = 0) -> dict[str, float]:
    missing = set(OPS) - set(PROBES)
    if missing:
        raise RuntimeError(f"ops without gradient probes: {sorted(missing)}")
    return {name: check_op(name, trials, seed) for name in OPS}


def toy_config(mode: str = "cac"):
    """Smallest model that still exercises every path (all three stages, PAG, CAC, OCC)."""
    from .config import RunConfig

    return RunConfig().override({
        "encoder.channels": [2, 3, 4, 4, 4],
        "encoder.layers": [1, 1, 2, 2, 2],
        "aggregation.hidden": 3,
        "pipeline.mode": mode,
        "pipeline.decoder_channels": 4,
        "data.n": 2,
        "data.size": 16,
        "train.dtype": "float64",
    })


def end_to_end(cfg=None, seed: int = 0, max_entries: int | None = None) -> float:
    """Gradient check of BCE + IoU + OCC through the whole model on one tiny group.

    The check runs at a generic point: offset heads get small random weights
    so sampling coordinates are fractional, and biases are made nonzero.  At
    the zero-bias initialisation a unit whose inputs are all zero sits exactly
    on the ReLU kink, where central differences report half the slope.
    """
    from .data import synth_group
    from .losses import total_loss
    from .pipeline import CondaModel

    cfg = cfg or toy_config()
    size = cfg.data.size
    model = CondaModel(cfg, size, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    for name, p in model.params.items():
        if name.startswith("off."):
            p.data = rng.normal(0.0, 0.3, size=p.shape)
        elif name.endswith(".b"):
            p.data = rng.normal(0.0, 0.1, size=p.shape)
    group = synth_group(seed, cfg.data.n, size, max_distractors=1)
    images, masks = group.images, group.masks

    def loss():
        pred = model(images)
        return total_loss(pred.prob, images, masks, pred.fields, cfg.loss)[0]

    return grad_check(loss, model.parameters(), max_entries=max_entries,
                      rng=np.random.default_rng(seed))
