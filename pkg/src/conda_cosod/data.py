"""Synthetic co-salient groups and the on-disk group-folder layout.

A group shares one shape class (the co-salient object) drawn with a random
position, scale, rotation and hue in every image.  Shapes of other classes act
as distractors and are never marked in the masks.

Layout: ``root/<group>/images/<stem>.png`` and ``root/<group>/masks/<stem>.png``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

SHAPES = ("ring", "cross", "triangle", "square", "disk", "star")
MIN_SIZE = 16


class DataError(ValueError):
    pass


class PairingError(DataError):
    pass


@dataclass
class GroupSample:
    images: np.ndarray  # [N,H,W,3] in [0,1]
    masks: np.ndarray  # [N,H,W,1] in {0,1}
    category: int = -1
    name: str = ""
    stems: list[str] = field(default_factory=list)
    _stage_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.images.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return self.images.shape[1:3]

    def at_stage(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        """Resized copies (bilinear images, nearest masks), computed on first use."""
        from .losses import stage_images, stage_masks

        if size not in self._stage_cache:
            self._stage_cache[size] = (stage_images(self.images, size), stage_masks(self.masks, size))
        return self._stage_cache[size]


def _shape_mask(kind: str, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Inside test in the shape's unit frame (circumradius 1)."""
    r = np.hypot(u, v)
    theta = np.arctan2(v, u)
    if kind == "disk":
        return r <= 1.0
    if kind == "ring":
        return (r <= 1.0) & (r >= 0.55)
    if kind == "cross":
        return ((np.abs(u) <= 0.32) & (np.abs(v) <= 1.0)) | ((np.abs(v) <= 0.32) & (np.abs(u) <= 1.0))
    if kind in ("triangle", "square"):
        sides = 3 if kind == "triangle" else 4
        sector = 2 * np.pi / sides
        phi = np.mod(theta + np.pi / 2, sector) - sector / 2
        return r * np.cos(phi) <= np.cos(np.pi / sides)
    if kind == "star":
        return r <= 0.45 + 0.55 * (0.5 + 0.5 * np.cos(5 * (theta + np.pi / 2)))
    raise DataError(f"unknown shape {kind!r}")


def _hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    i = int(h * 6) % 6
    f = h * 6 - int(h * 6)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    return np.array([(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i])


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = rng.uniform(0.35, 0.65, size=3)
    img = np.broadcast_to(base, (size, size, 3)).copy()
    for _ in range(3):
        fx, fy = rng.uniform(1, 6, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.03, 0.08, size=3)
        wave = np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
        img += wave[..., None] * amp
    img += rng.normal(0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _place(rng, kind, size, radius, cy, cx):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    angle = rng.uniform(0, 2 * np.pi)
    c, s = np.cos(angle), np.sin(angle)
    dy, dx = (yy - cy) / radius, (xx - cx) / radius
    return _shape_mask(kind, c * dx + s * dy, -s * dx + c * dy)


def _paint(img, mask, rng, hue=None):
    hue = rng.uniform(0, 1) if hue is None else hue
    color = _hsv_to_rgb(hue, rng.uniform(0.75, 1.0), rng.uniform(0.8, 1.0))
    shade = 1.0 - 0.12 * rng.random(mask.shape)
    img[mask] = np.clip(color[None, :] * shade[mask][:, None], 0, 1)


def synth_group(seed: int, n: int = 6, size: int = 64, category: int | str | None = None,
                max_distractors: int = 2, name: str = "") -> GroupSample:
    """Render one deterministic group; ``category`` is an index or name in ``SHAPES``."""
    if n < 2:
        raise DataError("a group needs at least 2 images")
    if isinstance(size, (tuple, list)):
        if size[0] != size[1]:
            raise DataError("only square images are generated")
        size = size[0]
    if size < MIN_SIZE:
        raise DataError(f"size {size} too small for the shape set (minimum {MIN_SIZE})")
    rng = np.random.default_rng(seed)
    if category is None:
        category = int(rng.integers(len(SHAPES)))
    if isinstance(category, str):
        category = SHAPES.index(category)
    kind = SHAPES[category]
    others = [s for s in SHAPES if s != kind]

    images = np.empty((n, size, size, 3))
    masks = np.zeros((n, size, size, 1))
    for i in range(n):
        img = _background(rng, size)
        radius = rng.uniform(0.18, 0.28) * size
        cy, cx = rng.uniform(radius, size - radius, size=2)
        for _ in range(int(rng.integers(0, max_distractors + 1))):
            d_kind = others[int(rng.integers(len(others)))]
            d_rad = rng.uniform(0.10, 0.16) * size
            for _try in range(20):
                dy, dx = rng.uniform(d_rad, size - d_rad, size=2)
                if np.hypot(dy - cy, dx - cx) > radius + d_rad:
                    break
            _paint(img, _place(rng, d_kind, size, d_rad, dy, dx), rng)
        obj = _place(rng, kind, size, radius, cy, cx)
        _paint(img, obj, rng)
        images[i] = img
        masks[i, ..., 0] = obj
    return GroupSample(images=images, masks=masks, category=category, name=name,
                       stems=[f"{i:03d}" for i in range(n)])


def synth_dataset(groups: int, n: int = 6, size: int = 64, seed: int = 0,
                  max_distractors: int = 2) -> list[GroupSample]:
    """Categories cycle through the shape list; per-group seeds derive from ``seed``."""
    seeds = np.random.SeedSequence(seed).generate_state(groups)
    return [synth_group(int(seeds[g]), n, size, g % len(SHAPES), max_distractors,
                        name=f"group_{g:03d}") for g in range(groups)]


def save_group(group: GroupSample, directory: str | Path) -> Path:
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    (directory / "masks").mkdir(parents=True, exist_ok=True)
    stems = group.stems or [f"{i:03d}" for i in range(group.n)]
    for stem, img, mask in zip(stems, group.images, group.masks):
        Image.fromarray(np.round(img * 255).astype(np.uint8), "RGB").save(directory / "images" / f"{stem}.png")
        Image.fromarray((mask[..., 0] > 0.5).astype(np.uint8) * 255, "L").save(directory / "masks" / f"{stem}.png")
    (directory / "group.json").write_text(json.dumps({"category": group.category}))
    return directory


def _read(path: Path, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert(mode), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode {path}: {exc}") from exc


def load_group(directory: str | Path) -> GroupSample:
    directory = Path(directory)
    img_dir, mask_dir = directory / "images", directory / "masks"
    if not img_dir.is_dir():
        raise DataError(f"{directory} has no images/ folder")
    image_files = sorted(p for p in img_dir.iterdir() if p.is_file())
    if not image_files:
        raise DataError(f"{img_dir} is empty")
    masks_by_stem = {p.stem: p for p in mask_dir.iterdir()} if mask_dir.is_dir() else {}
    images, masks, stems = [], [], []
    for path in image_files:
        if path.stem not in masks_by_stem:
            raise PairingError(f"no mask for image '{path.stem}' in {mask_dir}")
        img = _read(path, "RGB")
        mask = _read(masks_by_stem[path.stem], "L")
        if mask.shape != img.shape[:2]:
            raise DataError(f"mask/image size mismatch for '{path.stem}'")
        images.append(img)
        masks.append((mask >= 0.5)[..., None].astype(np.float64))
        stems.append(path.stem)
    if len({im.shape for im in images}) != 1:
        raise DataError(f"images in {directory} differ in size")
    meta = directory / "group.json"
    category = json.loads(meta.read_text()).get("category", -1) if meta.exists() else -1
    return GroupSample(np.stack(images), np.stack(masks), category, directory.name, stems)


def load_dataset(root: str | Path) -> list[GroupSample]:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    groups = [load_group(d) for d in sorted(root.iterdir()) if (d / "images").is_dir()]
    if not groups:
        raise DataError(f"no groups found under {root}")
    return groups
