"""Deep aggregation of per-pixel 4-D association tensors.

Each aggregation layer convolves over the target spatial dims, downsamples
them bilinearly, then convolves over the source spatial dims.  After the last
layer the target dims are 1x1 and the result is ``F'[N,H,W,N,C]``; averaging
over the target-image axis gives ``F[N,H,W,C]``.

Full-pixel inputs keep 3x3 'same' target convs and mean-pool whatever target
extent is left.  Condensed ``K x K`` inputs replace the last target conv with
a 'valid' conv whose kernel spans the remaining extent (9 -> 5 -> 1 for K=9).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .config import AggConfig
from .params import Params, conv_params
from .tensor import ShapeError, Tensor


@dataclass
class AssociationFeature:
    per_target: Tensor  # [N, H, W, N, C]
    pooled: Tensor  # [N, H, W, C]


@dataclass(frozen=True)
class LayerPlan:
    target_kernel: int
    target_padding: str
    in_size: tuple[int, int]
    out_size: tuple[int, int]  # after the downsample
    cin: int
    cout: int


def plan(cfg: AggConfig, target_size: tuple[int, int], in_channels: int, out_channels: int,
         condensed: bool) -> list[LayerPlan]:
    """Per-layer geometry for a target extent; pure function of its arguments."""
    layers = []
    size = tuple(target_size)
    cin = in_channels
    for idx in range(cfg.num_layers):
        last = idx == cfg.num_layers - 1
        cout = out_channels if last else cfg.hidden
        if condensed and last:
            if size[0] != size[1]:
                raise ShapeError(f"condensed target extent must be square, got {size}")
            kernel, pad, out = size[0], "valid", (1, 1)
        else:
            kernel, pad = 3, "same"
            out = (math.ceil(size[0] / cfg.factor), math.ceil(size[1] / cfg.factor))
        layers.append(LayerPlan(kernel, pad, size, out, cin, cout))
        size, cin = out, cout
    return layers


def init_aggregation(prefix: str, cfg: AggConfig, target_size, in_channels: int,
                     out_channels: int, condensed: bool, rng, dtype=np.float64) -> Params:
    params: Params = {}
    for idx, lp in enumerate(plan(cfg, target_size, in_channels, out_channels, condensed), 1):
        conv_params(params, f"{prefix}.l{idx}.target", rng, lp.target_kernel, lp.target_kernel,
                    lp.cin, lp.cout, dtype)
        conv_params(params, f"{prefix}.l{idx}.source", rng, 3, 3, lp.cout, lp.cout, dtype)
    return params


def target_conv(a: Tensor, w: Tensor, b: Tensor, padding: str = "same") -> Tensor:
    """Shared-weight conv over the target dims of every ``(i, h, w, j)`` slice."""
    n, h, wd, n2, t1, t2, c = a.shape
    x = ops.reshape(a, (n * h * wd * n2, t1, t2, c))
    y = ops.conv2d(x, w, b, padding=padding)
    return ops.reshape(y, (n, h, wd, n2) + y.shape[1:])


def target_downsample(a: Tensor, factor: int = 2, out_size: tuple[int, int] | None = None) -> Tensor:
    if out_size is None:
        if factor < 2:
            raise ValueError("downsample factor must be >= 2")
        out_size = (math.ceil(a.shape[4] / factor), math.ceil(a.shape[5] / factor))
    if min(out_size) < 1:
        raise ShapeError("downsampled target extent must be >= 1")
    return ops.bilinear_resize(a, out_size[0], out_size[1])


def source_conv(a: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Shared-weight 3x3 conv over the source dims of every ``(i, ., ., j, ht, wt)`` slice."""
    n, h, wd, n2, t1, t2, c = a.shape
    x = ops.transpose(a, (0, 3, 4, 5, 1, 2, 6))
    x = ops.reshape(x, (n * n2 * t1 * t2, h, wd, c))
    y = ops.conv2d(x, w, b, padding="same")
    cout = y.shape[-1]
    y = ops.reshape(y, (n, n2, t1, t2, h, wd, cout))
    return ops.transpose(y, (0, 4, 5, 1, 2, 3, 6))


def aggregate(values: Tensor, cfg: AggConfig, params: Params, prefix: str,
              condensed: bool) -> AssociationFeature:
    """Squeeze ``[N,H,W,N,Ht,Wt,L]`` associations into ``F'`` and its target mean ``F``."""
    if values.ndim != 7:
        raise ShapeError(f"expected a 7-D association tensor, got {values.shape}")
    l_in = values.shape[-1]
    c_out = params[f"{prefix}.l{cfg.num_layers}.target.w"].shape[-1]
    layers = plan(cfg, values.shape[4:6], l_in, c_out, condensed)
    x = values
    for idx, lp in enumerate(layers, 1):
        w_t, b_t = params[f"{prefix}.l{idx}.target.w"], params[f"{prefix}.l{idx}.target.b"]
        if w_t.shape[:3] != (lp.target_kernel, lp.target_kernel, lp.cin):
            raise ShapeError(f"{prefix}.l{idx}: weights {w_t.shape} do not fit plan {lp}")
        x = ops.relu(target_conv(x, w_t, b_t, lp.target_padding))
        if lp.target_padding == "same" and lp.out_size != lp.in_size:
            x = target_downsample(x, out_size=lp.out_size)
        x = source_conv(x, params[f"{prefix}.l{idx}.source.w"], params[f"{prefix}.l{idx}.source.b"])
        if idx < len(layers):
            x = ops.relu(x)
    if x.shape[4:6] != (1, 1):
        x = ops.mean(x, axis=(4, 5))
    else:
        n, h, w, n2 = x.shape[:4]
        x = ops.reshape(x, (n, h, w, n2, x.shape[-1]))
    return AssociationFeature(per_target=x, pooled=ops.mean(x, axis=3))
