"""Independent scalar reference implementations used by the tests.

Deliberately written with plain Python loops so they share no code paths
with the vectorised package implementations.
"""

from __future__ import annotations

import math

import numpy as np


# -- association -----------------------------------------------------------

def hac_triple_loop(layers: list[np.ndarray]) -> np.ndarray:
    """relu(cosine) between every pixel pair, one layer at a time."""
    n, h, w, c = layers[0].shape
    out = np.zeros((n, h, w, n, h, w, len(layers)))
    for l, f in enumerate(layers):
        for i in range(n):
            for y in range(h):
                for x in range(w):
                    a = f[i, y, x]
                    na = math.sqrt(sum(v * v for v in a))
                    for j in range(n):
                        for yy in range(h):
                            for xx in range(w):
                                b = f[j, yy, xx]
                                nb = math.sqrt(sum(v * v for v in b))
                                dot = sum(p * q for p, q in zip(a, b))
                                cos = dot / (max(na, 1e-8) * max(nb, 1e-8))
                                out[i, y, x, j, yy, xx, l] = max(cos, 0.0)
    return out


def argmax_scan(values: np.ndarray) -> np.ndarray:
    """Exhaustive row-major scan keeping the first strict maximum."""
    n, h, w, n2, ht, wt, _ = values.shape
    out = np.zeros((n, h, w, n2, 2), dtype=np.int64)
    for idx in np.ndindex(n, h, w, n2):
        best, pos = -math.inf, (0, 0)
        for yy in range(ht):
            for xx in range(wt):
                s = float(sum(values[idx + (yy, xx)]))
                if s > best:
                    best, pos = s, (yy, xx)
        out[idx] = pos
    return out


def bilinear_point(a: np.ndarray, y: float, x: float) -> np.ndarray:
    """Textbook bilinear sample of ``a[H, W, C]`` at a clamped point."""
    h, w = a.shape[:2]
    y = min(max(y, 0.0), h - 1)
    x = min(max(x, 0.0), w - 1)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    dy, dx = y - y0, x - x0
    return ((1 - dy) * (1 - dx) * a[y0, x0] + (1 - dy) * dx * a[y0, x1]
            + dy * (1 - dx) * a[y1, x0] + dy * dx * a[y1, x1])


# -- SSIM ----------------------------------------------------------------

def ssim_scalar(x: np.ndarray, y: np.ndarray, window: int = 3, c1: float = 0.01**2,
                c2: float = 0.03**2) -> float:
    """Mean over valid window positions and channels of the textbook SSIM."""
    h, w, c = x.shape
    vals = []
    for ch in range(c):
        for i in range(h - window + 1):
            for j in range(w - window + 1):
                px = [x[i + a, j + b, ch] for a in range(window) for b in range(window)]
                py = [y[i + a, j + b, ch] for a in range(window) for b in range(window)]
                m = len(px)
                mx, my = sum(px) / m, sum(py) / m
                vx = sum(v * v for v in px) / m - mx * mx
                vy = sum(v * v for v in py) / m - my * my
                cxy = sum(p * q for p, q in zip(px, py)) / m - mx * my
                vals.append(((2 * mx * my + c1) * (2 * cxy + c2))
                            / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


# -- metrics -------------------------------------------------------------

def mae_scalar(pred, gt) -> float:
    h, w = gt.shape
    return sum(abs(float(pred[i, j]) - float(gt[i, j])) for i in range(h) for j in range(w)) / (h * w)


def fmax_scalar(pred, gt, beta2: float = 0.3) -> float:
    h, w = gt.shape
    pix = [(float(pred[i, j]), bool(gt[i, j])) for i in range(h) for j in range(w)]
    n_gt = sum(1 for _, g in pix if g)
    best = 0.0
    for k in range(256):
        t = k / 255.0
        tp = sum(1 for p, g in pix if p >= t and g)
        pp = sum(1 for p, _ in pix if p >= t)
        if n_gt == 0:
            f = 1.0 if pp == 0 else 0.0
        else:
            prec = tp / pp if pp else 0.0
            rec = tp / n_gt
            f = (1 + beta2) * prec * rec / (beta2 * prec + rec) if (prec or rec) else 0.0
        best = max(best, f)
    return best


def emax_scalar(pred, gt) -> float:
    h, w = gt.shape
    n = h * w
    eps = np.finfo(np.float64).eps
    g = [float(gt[i, j]) for i in range(h) for j in range(w)]
    p = [float(pred[i, j]) for i in range(h) for j in range(w)]
    n_gt = sum(g)
    best = 0.0
    for k in range(256):
        t = k / 255.0
        fg = [1.0 if v >= t else 0.0 for v in p]
        if n_gt == 0:
            score = sum(1.0 - v for v in fg) / n
        elif n_gt == n:
            score = sum(fg) / n
        else:
            mf, mg = sum(fg) / n, n_gt / n
            total = 0.0
            for a, b in zip(fg, g):
                da, db = a - mf, b - mg
                align = 2 * da * db / (da * da + db * db + eps)
                total += (align + 1) ** 2 / 4
            score = total / n
        best = max(best, score)
    return best


def _ssim_block(p: list[float], g: list[float]) -> float:
    n = len(p)
    if n == 0:
        return 0.0
    eps = np.finfo(np.float64).eps
    x, y = sum(p) / n, sum(g) / n
    if n > 1:
        sx = sum((v - x) ** 2 for v in p) / (n - 1)
        sy = sum((v - y) ** 2 for v in g) / (n - 1)
        sxy = sum((a - x) * (b - y) for a, b in zip(p, g)) / (n - 1)
    else:
        sx = sy = sxy = 0.0
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + eps)
    return 1.0 if beta == 0 else 0.0


def _object_score(vals: list[float]) -> float:
    if not vals:
        return 0.0
    eps = np.finfo(np.float64).eps
    mu = sum(vals) / len(vals)
    sd = math.sqrt(sum((v - mu) ** 2 for v in vals) / (len(vals) - 1)) if len(vals) > 1 else 0.0
    return 2 * mu / (mu * mu + 1 + sd + eps)


def smeasure_scalar(pred, gt, alpha: float = 0.5) -> float:
    h, w = gt.shape
    cells = [(i, j) for i in range(h) for j in range(w)]
    fgc = [(i, j) for i, j in cells if gt[i, j]]
    y = len(fgc) / (h * w)
    if y == 0:
        return max(1.0 - sum(float(pred[c]) for c in cells) / (h * w), 0.0)
    if y == 1:
        return max(sum(float(pred[c]) for c in cells) / (h * w), 0.0)
    obj_fg = _object_score([float(pred[c]) for c in fgc])
    obj_bg = _object_score([1.0 - float(pred[c]) for c in cells if not gt[c]])
    s_obj = y * obj_fg + (1 - y) * obj_bg
    cy = round(sum(c[0] for c in fgc) / len(fgc))
    cx = round(sum(c[1] for c in fgc) / len(fgc))
    X, Y = int(cx) + 1, int(cy) + 1
    area = h * w
    quads = [((0, Y), (0, X)), ((0, Y), (X, w)), ((Y, h), (0, X)), ((Y, h), (X, w))]
    weights = [X * Y / area, Y * (w - X) / area, (h - Y) * X / area]
    weights.append(1 - sum(weights))
    s_reg = 0.0
    for wt, ((r0, r1), (c0, c1)) in zip(weights, quads):
        p = [float(pred[i, j]) for i in range(r0, r1) for j in range(c0, c1)]
        g = [float(gt[i, j]) for i in range(r0, r1) for j in range(c0, c1)]
        s_reg += wt * _ssim_block(p, g)
    return max(alpha * s_obj + (1 - alpha) * s_reg, 0.0)


# -- optimiser -----------------------------------------------------------

def adam_scalar(p: float, grads: list[float], lr: float, b1=0.9, b2=0.99, eps=1e-8) -> float:
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        p = p - lr * mh / (math.sqrt(vh) + eps)
    return p


# -- dense ops -----------------------------------------------------------

def resize_scalar(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centre bilinear resize of ``x[H, W, C]`` one output pixel at a time."""
    h, w, c = x.shape
    out = np.zeros((out_h, out_w, c))
    for i in range(out_h):
        for j in range(out_w):
            sy = min(max((i + 0.5) * h / out_h - 0.5, 0.0), h - 1)
            sx = min(max((j + 0.5) * w / out_w - 0.5, 0.0), w - 1)
            out[i, j] = bilinear_point(x, sy, sx)
    return out


def conv3x3_scalar(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' 3x3 convolution of ``x[H, W, Cin]``."""
    h, w, cin = x.shape
    cout = k.shape[-1]
    out = np.zeros((h, w, cout))
    for i in range(h):
        for j in range(w):
            for o in range(cout):
                acc = b[o]
                for a in range(3):
                    for d in range(3):
                        y, z = i + a - 1, j + d - 1
                        if 0 <= y < h and 0 <= z < w:
                            acc += sum(x[y, z, q] * k[a, d, q, o] for q in range(cin))
                out[i, j, o] = acc
    return out
