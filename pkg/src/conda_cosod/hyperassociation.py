"""Full-pixel hyperassociations and the condensed gather primitive.

Layout of a hyperassociation is ``[N, H, W, N, Ht, Wt, L]``: a source pixel
``(i, h, w)``, a target image ``j``, target spatial dims and the stacked layer
axis.  Condensed hyperassociations replace ``Ht x Wt`` with ``K x K``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor


@dataclass
class Hyperassociation:
    values: Tensor
    stage: int | None = None

    @property
    def group_size(self) -> int:
        return self.values.shape[0]

    @property
    def source_size(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    @property
    def target_size(self) -> tuple[int, int]:
        return self.values.shape[4], self.values.shape[5]


@dataclass
class CondensedHyperassociation:
    values: Tensor  # [N, H, W, N, K, K, L]
    coords: Tensor  # [N, H, W, N, K, K, 2], clamped target pixel coordinates

    @property
    def k(self) -> int:
        return self.values.shape[4]


def compute_hac(features: list[Tensor], stage: int | None = None,
                zero_self_pairs: bool = False, eps: float = 1e-8) -> Hyperassociation:
    """ReLU'd cosine similarity between all pixel pairs of the group, per layer.

    One l2 normalisation and one ``(N*H*W) x (N*H*W)`` product per layer; the
    layers are stacked on the last axis.
    """
    if not features:
        raise ShapeError("compute_hac needs at least one layer")
    shape = features[0].shape
    if any(f.shape != shape for f in features):
        raise ShapeError(f"inconsistent layer shapes {[f.shape for f in features]}")
    n, h, w, c = shape
    per_layer = []
    for f in features:
        unit = ops.l2_normalize(ops.reshape(f, (n * h * w, c)), eps)
        sim = ops.relu(ops.matmul(unit, ops.transpose(unit, (1, 0))))
        per_layer.append(ops.reshape(sim, (n, h, w, n, h, w)))
    values = ops.stack(per_layer, axis=-1)
    if zero_self_pairs:
        mask = 1.0 - np.eye(n, dtype=values.dtype)
        values = ops.mul(values, Tensor(mask.reshape(n, 1, 1, n, 1, 1, 1)))
    return Hyperassociation(values, stage)


def sum_similarity(a: Tensor | np.ndarray) -> np.ndarray:
    """Collapse the layer axis by summation (plain array; used for argmax only)."""
    data = a.data if isinstance(a, Tensor) else np.asarray(a)
    return data.sum(axis=-1)


def gather_condensed(a: Tensor, coords: Tensor | np.ndarray) -> Tensor:
    """Sample one ``[H, W, L]`` association slice at ``[K, K, 2]`` coordinates."""
    coords = coords if isinstance(coords, Tensor) else Tensor(np.asarray(coords, dtype=a.dtype))
    k1, k2, _ = coords.shape
    h, w, l = a.shape
    out = ops.bilinear_gather(ops.reshape(a, (1, h, w, l)), ops.reshape(coords, (1, k1 * k2, 2)))
    return ops.reshape(out, (k1, k2, l))


def condense_values(values: Tensor, coords: Tensor) -> Tensor:
    """Batched :func:`gather_condensed` over every (source pixel, target image)."""
    n, h, w, n2, ht, wt, l = values.shape
    k1, k2 = coords.shape[4:6]
    if coords.shape[:4] != (n, h, w, n2):
        raise ShapeError(f"coords {coords.shape} do not match associations {values.shape}")
    b = n * h * w * n2
    flat = ops.reshape(values, (b, ht, wt, l))
    out = ops.bilinear_gather(flat, ops.reshape(coords, (b, k1 * k2, 2)))
    return ops.reshape(out, (n, h, w, n2, k1, k2, l))
