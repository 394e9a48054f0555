"""Segmentation losses and the object-aware cycle-consistency loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .cac import CorrespondenceField
from .config import LossConfig
from .encoder import PAG_STAGES
from .ops import resize_matrix
from .tensor import ShapeError, Tensor

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
PROB_EPS = 1e-7


@dataclass
class LossReport:
    bce: float
    iou: float
    occ: float
    occ_stages: dict[int, float] = field(default_factory=dict)
    total: float = 0.0
    weights: tuple[float, float, float] = (1.0, 1.0, 0.1)

    def as_row(self) -> dict[str, float]:
        row = {"bce": self.bce, "iou": self.iou, "occ": self.occ}
        for s in PAG_STAGES:
            row[f"occ_s{s}"] = self.occ_stages.get(s, 0.0)
        row["total"] = self.total
        return row


def _check_mask(gt: np.ndarray) -> None:
    if not np.all((gt == 0) | (gt == 1)):
        raise ValueError("ground-truth masks must be binary {0, 1}")


def bce_iou(prob: Tensor, gt: Tensor | np.ndarray) -> tuple[Tensor, Tensor]:
    """Mean binary cross-entropy and per-image soft-IoU loss (averaged over images)."""
    g = gt.data if isinstance(gt, Tensor) else np.asarray(gt)
    if prob.shape != g.shape:
        raise ShapeError(f"prob {prob.shape} vs gt {g.shape}")
    _check_mask(g)
    g = Tensor(g.astype(prob.dtype))
    p = ops.clamp(prob, PROB_EPS, 1.0 - PROB_EPS)
    ll = ops.add(ops.mul(g, ops.log(p)), ops.mul(ops.sub(1.0, g), ops.log(ops.sub(1.0, p))))
    bce = ops.scale(ops.mean(ll), -1.0)

    axes = tuple(range(1, prob.ndim))
    inter = ops.sum(ops.mul(prob, g), axis=axes)
    union = ops.sub(ops.add(ops.sum(prob, axis=axes), ops.sum(g, axis=axes)), inter)
    iou = ops.mean(ops.sub(1.0, ops.div(inter, union)))
    return bce, iou


def _box_mean(x: Tensor, window: int) -> Tensor:
    """Uniform-window mean over spatial dims of ``[B,H,W,C]`` ('valid' positions only)."""
    b, h, w, c = x.shape
    planes = ops.reshape(ops.transpose(x, (0, 3, 1, 2)), (b * c, h, w, 1))
    kernel = np.full((window, window, 1, 1), 1.0 / window**2, dtype=x.dtype)
    out = ops.conv2d(planes, Tensor(kernel), Tensor(np.zeros(1, dtype=x.dtype)), padding="valid")
    return ops.reshape(out, (b, c) + out.shape[1:3])


def ssim_batch(x: Tensor, y: Tensor, window: int = 3, c1: float = SSIM_C1,
               c2: float = SSIM_C2) -> Tensor:
    """Mean local SSIM per item of ``[B,H,W,C]`` pairs -> ``[B]``."""
    if x.shape != y.shape:
        raise ShapeError(f"ssim shapes differ: {x.shape} vs {y.shape}")
    if window > x.shape[1] or window > x.shape[2]:
        raise ShapeError(f"window {window} larger than image {x.shape[1:3]}")
    mx, my = _box_mean(x, window), _box_mean(y, window)
    sxx = ops.sub(_box_mean(ops.mul(x, x), window), ops.mul(mx, mx))
    syy = ops.sub(_box_mean(ops.mul(y, y), window), ops.mul(my, my))
    sxy = ops.sub(_box_mean(ops.mul(x, y), window), ops.mul(mx, my))
    num = ops.mul(ops.add(ops.scale(ops.mul(mx, my), 2.0), c1), ops.add(ops.scale(sxy, 2.0), c2))
    den = ops.mul(ops.add(ops.add(ops.mul(mx, mx), ops.mul(my, my)), c1),
                  ops.add(ops.add(sxx, syy), c2))
    return ops.mean(ops.div(num, den), axis=(1, 2, 3))


def ssim(x: Tensor, y: Tensor, window: int = 3, c1: float = SSIM_C1, c2: float = SSIM_C2) -> Tensor:
    """Mean SSIM of two ``[H,W,C]`` images with uniform-window statistics."""
    if x.ndim != 3:
        raise ShapeError("ssim expects [H,W,C] images")
    xb = ops.reshape(x, (1,) + x.shape)
    yb = ops.reshape(y, (1,) + y.shape)
    return ops.reshape(ssim_batch(xb, yb, window, c1, c2), ())


def warp_cycle(image: Tensor | np.ndarray, refined_ij: Tensor, refined_ji: Tensor) -> Tensor:
    """``I_i`` warped to image j and back.

    ``refined_ij[h, w]`` is the position in image j matched to pixel (h, w) of
    image i.  The round trip samples ``refined_ji`` at that position and then
    samples ``I_i`` at the result.
    """
    img = image if isinstance(image, Tensor) else Tensor(np.asarray(image, dtype=refined_ij.dtype))
    h, w, c = img.shape
    back = ops.bilinear_gather(ops.reshape(refined_ji, (1, h, w, 2)),
                               ops.reshape(refined_ij, (1, h * w, 2)))
    out = ops.bilinear_gather(ops.reshape(img, (1, h, w, c)), back)
    return ops.reshape(out, (h, w, c))


def stage_images(images: np.ndarray, size: int) -> np.ndarray:
    """Bilinear (half-pixel) resize of ``[N,H,W,C]`` arrays to ``size x size``."""
    n, h, w, c = images.shape
    if (h, w) == (size, size):
        return images
    rh = resize_matrix(h, size, images.dtype)
    rw = resize_matrix(w, size, images.dtype)
    return np.einsum("oh,nhwc,pw->nopc", rh, images, rw)


def stage_masks(masks: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbour resize, keeping masks binary."""
    n, h, w, c = masks.shape
    rows = np.minimum(((np.arange(size) + 0.5) * h / size).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(size) + 0.5) * w / size).astype(np.int64), w - 1)
    return masks[:, rows][:, :, cols]


def _ssim_window(window: int, h: int, w: int) -> int:
    limit = min(window, h, w)
    return limit if limit % 2 else limit - 1


def occ_stage_loss(images: np.ndarray, masks: np.ndarray, refined: Tensor, window: int = 3,
                   object_aware: bool = True) -> Tensor:
    """Masked SSIM cycle loss averaged over all N^2 ordered pairs (self-pairs included)."""
    n, h, w, c = images.shape
    if refined.shape != (n, h, w, n, 2):
        raise ShapeError(f"refined field {refined.shape} does not match images {images.shape}")
    dtype = refined.dtype
    # batch index b = i * n + j
    coords_ij = ops.reshape(ops.transpose(refined, (0, 3, 1, 2, 4)), (n * n, h * w, 2))
    field_ji = ops.reshape(ops.transpose(refined, (3, 0, 1, 2, 4)), (n * n, h, w, 2))
    back = ops.bilinear_gather(field_ji, coords_ij)
    src = np.repeat(images.astype(dtype), n, axis=0)
    cycled = ops.reshape(ops.bilinear_gather(Tensor(src), back), (n * n, h, w, c))
    if object_aware:
        g = np.repeat(masks.astype(dtype), n, axis=0)
    else:
        g = np.ones((n * n, h, w, 1), dtype=dtype)
    x = Tensor(src * g)
    y = ops.mul(cycled, Tensor(g))
    win = _ssim_window(window, h, w)
    per_pair = ops.scale(ops.sub(1.0, ssim_batch(x, y, win)), 0.5)
    return ops.mean(per_pair)


def occ_loss(images: np.ndarray, masks: np.ndarray, fields: dict[int, CorrespondenceField],
             window: int = 3, object_aware: bool = True) -> tuple[Tensor, dict[int, Tensor]]:
    """Sum of the per-stage cycle losses over the stages that carry a field."""
    per_stage: dict[int, Tensor] = {}
    for s, fld in sorted(fields.items()):
        size = fld.refined.shape[1]
        per_stage[s] = occ_stage_loss(stage_images(images, size), stage_masks(masks, size),
                                      fld.refined, window, object_aware)
    if not per_stage:
        return Tensor(np.zeros((), dtype=images.dtype)), per_stage
    total = per_stage[min(per_stage)]
    for s in sorted(per_stage)[1:]:
        total = ops.add(total, per_stage[s])
    return total, per_stage


def total_loss(prob: Tensor, images: np.ndarray, masks: np.ndarray,
               fields: dict[int, CorrespondenceField], cfg: LossConfig) -> tuple[Tensor, LossReport]:
    bce, iou = bce_iou(prob, masks)
    total = ops.add(ops.scale(bce, cfg.bce), ops.scale(iou, cfg.iou))
    occ_value, occ_stages = 0.0, {}
    if cfg.occ_mode != "none" and fields:
        occ, stages = occ_loss(images.astype(prob.dtype), masks, fields, cfg.ssim_window,
                               cfg.occ_mode == "object")
        total = ops.add(total, ops.scale(occ, cfg.occ))
        occ_value = occ.item()
        occ_stages = {s: v.item() for s, v in stages.items()}
    report = LossReport(bce=bce.item(), iou=iou.item(), occ=occ_value, occ_stages=occ_stages,
                        total=total.item(), weights=(cfg.bce, cfg.iou, cfg.occ))
    return total, report
