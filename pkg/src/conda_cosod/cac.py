"""Correspondence-induced association condensation.

For each source pixel and target image: take the target pixel of maximal
layer-summed similarity, condense a K x K window around it, aggregate, predict
per-window offsets from that first aggregation, move the window, condense
again and aggregate a second time.  ``mode="sac"`` stops after the window
condensation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .aggregation import AssociationFeature, aggregate
from .config import AggConfig
from .hyperassociation import CondensedHyperassociation, Hyperassociation, condense_values, sum_similarity
from .params import Params, zeros
from .tensor import ShapeError, Tensor


@dataclass
class CorrespondenceField:
    init: np.ndarray  # [N,H,W,N,2] int64, max-similarity target pixel
    refined: Tensor  # [N,H,W,N,2] clamped float coordinates
    neighbors: Tensor  # [N,H,W,N,K,K,2]
    delta: Tensor | None = None  # [N,H,W,N,K,K,2] predicted offsets (CAC only)

    @property
    def k(self) -> int:
        return self.neighbors.shape[4]


def stage_k(k: int, height: int, width: int) -> int:
    """Largest odd window <= k that is strictly smaller than the target map (min 1)."""
    limit = min(k, min(height, width) - 1)
    if limit % 2 == 0:
        limit -= 1
    return max(limit, 1)


def center_index(k: int) -> int:
    if k % 2 == 0:
        raise ValueError("K must be odd")
    return (k - 1) // 2


def window_grid(k: int) -> np.ndarray:
    """[K,K,2] integer displacements ``(x - kc, y - kc)``."""
    kc = center_index(k)
    r = np.arange(k) - kc
    return np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1)


def initial_correspondence(assoc: Hyperassociation | np.ndarray) -> np.ndarray:
    """Argmax target pixel of the layer-summed similarity; ties -> smallest row-major index."""
    values = assoc.values.data if isinstance(assoc, Hyperassociation) else np.asarray(assoc)
    summed = sum_similarity(values)  # [N,H,W,N,Ht,Wt]
    ht, wt = summed.shape[-2:]
    flat = summed.reshape(summed.shape[:-2] + (ht * wt,))
    idx = np.argmax(flat, axis=-1)
    return np.stack([idx // wt, idx % wt], axis=-1).astype(np.int64)


def _bounds(size: tuple[int, int]) -> np.ndarray:
    return np.array([size[0] - 1, size[1] - 1], dtype=np.float64)


def fixed_window(init: np.ndarray, k: int, size: tuple[int, int]) -> np.ndarray:
    """[..., K, K, 2] window coordinates around ``init``, clamped into the map."""
    grid = window_grid(k)
    coords = init[..., None, None, :] + grid
    return np.clip(coords, 0, _bounds(size).astype(np.int64))


def init_offset_head(prefix: str, channels: int, k: int, dtype=np.float64) -> Params:
    # zero weights and bias: the first CAC step reproduces the similarity window
    return {f"{prefix}.w": zeros((channels, k * k * 2), dtype), f"{prefix}.b": zeros((k * k * 2,), dtype)}


def predict_offsets(per_target: Tensor, w: Tensor, b: Tensor, k: int,
                    bound: float | None = None) -> Tensor:
    """Linear map of each ``F'(i,h,w,j,:)`` to a ``[K,K,2]`` offset grid (pixels)."""
    if per_target.ndim != 5:
        raise ShapeError(f"per_target must be [N,H,W,N,C], got {per_target.shape}")
    delta = ops.linear(per_target, w, b)
    if bound is not None:
        delta = ops.scale(ops.tanh(ops.scale(delta, 1.0 / bound)), bound)
    return ops.reshape(delta, per_target.shape[:4] + (k, k, 2))


def build_neighbors(init: np.ndarray, delta: Tensor, size: tuple[int, int]) -> CorrespondenceField:
    """Refined centre = init + centre offset; every other window cell sits at
    refined + its grid displacement + its own offset.  All coordinates clamped."""
    k = delta.shape[-2]
    kc = center_index(k)
    if delta.shape[:-3] != init.shape[:-1]:
        raise ShapeError(f"delta {delta.shape} does not match init {init.shape}")
    dtype = delta.dtype
    hi = _bounds(size).astype(dtype)
    base = Tensor(init.astype(dtype))
    center = delta[..., kc, kc, :]
    refined_raw = ops.add(base, center)
    refined = ops.clamp(refined_raw, 0.0, hi)

    lead = init.shape[:-1]
    off_center = np.ones((k, k, 1), dtype=dtype)
    off_center[kc, kc] = 0.0
    grid = Tensor((init[..., None, None, :] + window_grid(k)).astype(dtype))
    center_b = ops.reshape(center, lead + (1, 1, 2))
    coords = ops.add(ops.add(grid, center_b), ops.mul(delta, Tensor(off_center)))
    neighbors = ops.clamp(coords, 0.0, hi)
    return CorrespondenceField(init=init, refined=refined, neighbors=neighbors, delta=delta)


def window_field(init: np.ndarray, k: int, size: tuple[int, int], dtype=np.float64) -> CorrespondenceField:
    coords = fixed_window(init, k, size).astype(dtype)
    refined = np.clip(init, 0, _bounds(size).astype(np.int64)).astype(dtype)
    return CorrespondenceField(init=init, refined=Tensor(refined), neighbors=Tensor(coords))


def condense(assoc: Hyperassociation, field: CorrespondenceField) -> CondensedHyperassociation:
    coords = field.neighbors
    if not np.all(np.isfinite(coords.data)):
        raise ValueError("non-finite correspondence coordinates")
    return CondensedHyperassociation(condense_values(assoc.values, coords), coords)


def cac_pass(assoc: Hyperassociation, agg_cfg: AggConfig, params: Params, stage: int, k: int,
             mode: str = "cac", share_passes: bool = True, offset_bound: float | None = None,
             ) -> tuple[CondensedHyperassociation, AssociationFeature, CorrespondenceField]:
    """SAC: window condensation + one aggregation.  CAC: SAC, offsets, re-condense, aggregate."""
    if mode not in ("sac", "cac"):
        raise ValueError(f"cac_pass mode must be 'sac' or 'cac', got {mode!r}")
    size = assoc.target_size
    if not (k < size[0] and k < size[1]) and k != 1:
        raise ShapeError(f"K={k} must be smaller than the {size} target map")
    dtype = assoc.values.dtype
    init = initial_correspondence(assoc)
    field = window_field(init, k, size, dtype)
    condensed = condense(assoc, field)
    feature = aggregate(condensed.values, agg_cfg, params, f"agg.s{stage}", condensed=True)
    if mode == "sac":
        return condensed, feature, field

    delta = predict_offsets(feature.per_target, params[f"off.s{stage}.w"], params[f"off.s{stage}.b"],
                            k, offset_bound)
    field = build_neighbors(init, delta, size)
    condensed = condense(assoc, field)
    prefix = f"agg.s{stage}" if share_passes else f"agg2.s{stage}"
    feature = aggregate(condensed.values, agg_cfg, params, prefix, condensed=True)
    return condensed, feature, field
