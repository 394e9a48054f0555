"""Saliency metrics: MAE, max F-measure, max E-measure and S-measure.

All functions take a prediction in [0, 1] and a binary mask of the same
``[H, W]`` shape (a trailing singleton channel is accepted).
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

BETA2 = 0.3
THRESHOLDS = np.arange(256) / 255.0
EPS = np.finfo(np.float64).eps


def _prep(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt)
    if p.ndim == 3 and p.shape[-1] == 1:
        p = p[..., 0]
    if g.ndim == 3 and g.shape[-1] == 1:
        g = g[..., 0]
    if p.shape != g.shape or p.ndim != 2:
        raise ValueError(f"pred {p.shape} and gt {g.shape} must be matching [H, W] maps")
    if not np.all((g == 0) | (g == 1)):
        raise ValueError("gt must be binary")
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ValueError("pred must lie in [0, 1]")
    return p, g.astype(bool)


def mae(pred, gt) -> float:
    p, g = _prep(pred, gt)
    return float(np.mean(np.abs(p - g)))


def _binarized(p: np.ndarray) -> np.ndarray:
    """[256, H*W] boolean maps ``pred >= t``."""
    return p.reshape(1, -1) >= THRESHOLDS[:, None]


def f_curve(pred, gt) -> np.ndarray:
    p, g = _prep(pred, gt)
    fg = _binarized(p)
    pos = fg.sum(axis=1).astype(np.float64)
    if not g.any():
        return (pos == 0).astype(np.float64)
    tp = (fg & g.reshape(1, -1)).sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pos, out=np.zeros_like(tp), where=pos > 0)
    recall = tp / g.sum()
    den = BETA2 * precision + recall
    return np.divide((1 + BETA2) * precision * recall, den, out=np.zeros_like(den), where=den > 0)


def f_max(pred, gt) -> float:
    return float(f_curve(pred, gt).max())


def e_curve(pred, gt) -> np.ndarray:
    """Enhanced-alignment score per threshold, normalised by the pixel count."""
    p, g = _prep(pred, gt)
    fg = _binarized(p).astype(np.float64)
    n = g.size
    gt_count = g.sum()
    if gt_count == 0:
        return (1.0 - fg).sum(axis=1) / n
    if gt_count == n:
        return fg.sum(axis=1) / n
    gf = g.reshape(1, -1).astype(np.float64)
    dp = fg - fg.mean(axis=1, keepdims=True)
    dg = gf - gf.mean()
    align = 2.0 * dp * dg / (dp**2 + dg**2 + EPS)
    return ((align + 1.0) ** 2 / 4.0).sum(axis=1) / n


def e_max(pred, gt) -> float:
    return float(e_curve(pred, gt).max())


def _s_object_part(x: np.ndarray, region: np.ndarray) -> float:
    vals = x[region]
    if vals.size == 0:
        return 0.0
    mu = vals.mean()
    sigma = vals.std(ddof=1) if vals.size > 1 else 0.0
    return float(2.0 * mu / (mu**2 + 1.0 + sigma + EPS))


def _s_object(p: np.ndarray, g: np.ndarray) -> float:
    u = g.mean()
    fg = np.where(g, p, 0.0)
    bg = np.where(~g, 1.0 - p, 0.0)
    return float(u * _s_object_part(fg, g) + (1 - u) * _s_object_part(bg, ~g))


def _centroid(g: np.ndarray) -> tuple[int, int]:
    h, w = g.shape
    if not g.any():
        return int(np.round(w / 2)) + 1, int(np.round(h / 2)) + 1
    y, x = np.argwhere(g).mean(axis=0).round()
    return int(x) + 1, int(y) + 1


def _ssim_region(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    if n == 0:
        return 0.0
    x, y = p.mean(), g.mean()
    if n > 1:
        sx = ((p - x) ** 2).sum() / (n - 1)
        sy = ((g - y) ** 2).sum() / (n - 1)
        sxy = ((p - x) * (g - y)).sum() / (n - 1)
    else:
        sx = sy = sxy = 0.0
    alpha = 4 * x * y * sxy
    beta = (x**2 + y**2) * (sx + sy)
    if alpha != 0:
        return float(alpha / (beta + EPS))
    return 1.0 if beta == 0 else 0.0


def _s_region(p: np.ndarray, g: np.ndarray) -> float:
    h, w = g.shape
    x, y = _centroid(g)
    gf = g.astype(np.float64)
    area = h * w
    w1 = x * y / area
    w2 = y * (w - x) / area
    w3 = (h - y) * x / area
    w4 = 1.0 - w1 - w2 - w3
    parts = [(slice(0, y), slice(0, x)), (slice(0, y), slice(x, w)),
             (slice(y, h), slice(0, x)), (slice(y, h), slice(x, w))]
    scores = [_ssim_region(p[r, c], gf[r, c]) for r, c in parts]
    return float(sum(wt * s for wt, s in zip((w1, w2, w3, w4), scores)))


def s_measure(pred, gt, alpha: float = 0.5) -> float:
    p, g = _prep(pred, gt)
    y = g.mean()
    if y == 0:
        s = 1.0 - p.mean()
    elif y == 1:
        s = p.mean()
    else:
        s = alpha * _s_object(p, g) + (1 - alpha) * _s_region(p, g)
    return float(max(s, 0.0))


@dataclass
class MetricReport:
    mae: float
    f_max: float
    e_max: float
    s_measure: float
    count: int
    per_image: list[dict] = field(default_factory=list, repr=False)

    def summary(self) -> dict[str, float]:
        return {"mae": self.mae, "f_max": self.f_max, "e_max": self.e_max,
                "s_measure": self.s_measure, "count": self.count}

    def write_csv(self, path: str | Path, dataset: str = "") -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        keys = ["dataset", "group", "image", "s_measure", "e_max", "f_max", "mae"]
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            for row in self.per_image:
                writer.writerow({"dataset": dataset, **{k: row.get(k, "") for k in keys[1:]}})
            summary = {k: v for k, v in self.summary().items() if k in keys}
            writer.writerow({"dataset": dataset, "group": "mean", "image": "", **summary})


def evaluate_pairs(pairs, names=None) -> MetricReport:
    """Average each metric over ``(pred, gt)`` pairs (per-image, then mean)."""
    rows = []
    for idx, (pred, gt) in enumerate(pairs):
        group, image = names[idx] if names is not None else ("", str(idx))
        rows.append({"group": group, "image": image, "mae": mae(pred, gt), "f_max": f_max(pred, gt),
                     "e_max": e_max(pred, gt), "s_measure": s_measure(pred, gt)})
    if not rows:
        raise ValueError("cannot evaluate an empty set of predictions")
    mean = {k: float(np.mean([r[k] for r in rows])) for k in ("mae", "f_max", "e_max", "s_measure")}
    return MetricReport(count=len(rows), per_image=rows, **mean)


__all__ = ["mae", "f_max", "e_max", "s_measure", "f_curve", "e_curve", "MetricReport",
           "evaluate_pairs"]
