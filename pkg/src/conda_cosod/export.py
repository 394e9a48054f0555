"""Correspondence export: flat binary fields and line-overlay PNGs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

MAGIC = "CONDA-CORR-1"


def write_corr(path: str | Path, stage: int, refined: np.ndarray) -> Path:
    """Header line ``CONDA-CORR-1 <stage> <N> <H_s> <W_s>`` then float32 ``[N,H,W,N,2]`` (little-endian)."""
    refined = np.asarray(refined)
    n, h, w, n2, two = refined.shape
    if n != n2 or two != 2:
        raise ValueError(f"refined field must be [N,H,W,N,2], got {refined.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(f"{MAGIC} {stage} {n} {h} {w}\n".encode())
        fh.write(np.ascontiguousarray(refined, dtype="<f4").tobytes())
    return path


def read_corr(path: str | Path) -> tuple[int, np.ndarray]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    parts = raw[:nl].decode(errors="replace").split()
    if nl < 0 or len(parts) != 5 or parts[0] != MAGIC:
        raise ValueError(f"{path} is not a {MAGIC} file")
    stage, n, h, w = (int(v) for v in parts[1:])
    payload = np.frombuffer(raw, dtype="<f4", offset=nl + 1)
    if payload.size != n * h * w * n * 2:
        raise ValueError(f"{path}: payload size {payload.size} does not match header")
    return stage, payload.reshape(n, h, w, n, 2).astype(np.float32)


def overlay(images: np.ndarray, masks: np.ndarray, refined: np.ndarray, main: int = 0,
            partners: int = 3, samples: int = 12, seed: int = 0) -> Image.Image:
    """Main image beside up to ``partners`` related images, lines joining sampled
    co-salient pixels of the main image to their refined matches."""
    n, hi, wi, _ = images.shape
    hs, ws = refined.shape[1:3]
    others = [j for j in range(n) if j != main][:partners]
    tiles = [main] + others
    canvas = Image.fromarray(np.round(np.concatenate([images[t] for t in tiles], axis=1) * 255)
                             .astype(np.uint8), "RGB")
    draw = ImageDraw.Draw(canvas)
    sy, sx = hi / hs, wi / ws
    # co-salient source pixels at stage resolution (nearest sampling of the mask)
    rows = np.minimum(((np.arange(hs) + 0.5) * sy).astype(int), hi - 1)
    cols = np.minimum(((np.arange(ws) + 0.5) * sx).astype(int), wi - 1)
    fg = np.argwhere(masks[main, rows][:, cols, 0] > 0.5)
    if len(fg) == 0:
        fg = np.argwhere(np.ones((hs, ws), dtype=bool))
    rng = np.random.default_rng(seed)
    picks = fg[rng.choice(len(fg), size=min(samples, len(fg)), replace=False)]
    colors = [(255, 64, 64), (64, 255, 64), (64, 160, 255), (255, 220, 0)]
    for slot, j in enumerate(others, start=1):
        color = colors[(slot - 1) % len(colors)]
        for y, x in picks:
            ty, tx = refined[main, y, x, j]
            p0 = ((x + 0.5) * sx, (y + 0.5) * sy)
            p1 = (slot * wi + (tx + 0.5) * sx, (ty + 0.5) * sy)
            draw.line([p0, p1], fill=color, width=1)
            draw.ellipse([p1[0] - 1.5, p1[1] - 1.5, p1[0] + 1.5, p1[1] + 1.5], outline=color)
    return canvas
