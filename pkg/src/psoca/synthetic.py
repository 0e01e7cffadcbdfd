"""Synthetic scenes with multi-annotator boundary maps.

Used for tests and demos when the real image set is not at hand. Each scene
is a piecewise-constant label image of rectangles and ellipses over a shaded
background with sensor noise; annotators trace the label boundaries with
dropout and one-pixel jitter, mimicking human disagreement.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .image_core import CATEGORIES, ManifestEntry, save_edge_map, write_manifest

__all__ = ["make_scene", "annotate", "write_dataset"]

# (shape count range, contrast range, noise sigma, texture amplitude) per category
_STYLE = {
    "animals": ((3, 6), (40, 120), 6.0, 45.0),
    "landscapes": ((1, 3), (15, 50), 4.0, 30.0),
    "objects": ((2, 4), (60, 160), 3.0, 15.0),
    "people": ((3, 5), (30, 100), 5.0, 30.0),
}


def _boundary(labels: np.ndarray) -> np.ndarray:
    edge = np.zeros(labels.shape, dtype=bool)
    edge[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    edge[1:, :] |= labels[1:, :] != labels[:-1, :]
    return edge


def make_scene(rng: np.random.Generator, height: int = 64, width: int = 96,
               category: str = "objects") -> tuple[np.ndarray, np.ndarray]:
    """Return ``(rgb uint8 image, boolean true-boundary map)``."""
    (lo, hi), (cmin, cmax), noise, texture = _STYLE[category]
    yy, xx = np.mgrid[0:height, 0:width]
    labels = np.zeros((height, width), dtype=np.int32)
    base = rng.uniform(60, 190)
    tone = {0: base}
    for k in range(1, int(rng.integers(lo, hi + 1)) + 1):
        cy, cx = rng.uniform(0.15, 0.85) * height, rng.uniform(0.15, 0.85) * width
        ry, rx = rng.uniform(0.1, 0.35) * height, rng.uniform(0.1, 0.35) * width
        if rng.random() < 0.5:
            inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            inside = (abs(yy - cy) <= ry) & (abs(xx - cx) <= rx)
        labels[inside] = k
        tone[k] = np.clip(base + rng.choice([-1, 1]) * rng.uniform(cmin, cmax), 0, 255)
    gray = np.vectorize(tone.get, otypes=[np.float64])(labels)
    # unannotated surface texture, different grain per region
    grain = ndimage.gaussian_filter(rng.normal(0.0, 1.0, gray.shape), 1.2)
    grain *= texture / (grain.std() or 1.0)
    gain = rng.uniform(0.3, 1.0, size=labels.max() + 1)
    gray += gain[labels] * grain
    gray += 20.0 * (xx / width - 0.5) + rng.normal(0.0, noise, gray.shape)
    tint = rng.uniform(0.9, 1.1, size=3)
    rgb = np.clip(gray[..., None] * tint, 0, 255).round().astype(np.uint8)
    return rgb, _boundary(labels)


def annotate(rng: np.random.Generator, truth: np.ndarray, n_annotators: int = 5,
             dropout: float = 0.2) -> list[np.ndarray]:
    """Noisy per-annotator copies of a boundary map."""
    h, w = truth.shape
    ys, xs = np.nonzero(truth)
    maps = []
    for _ in range(n_annotators):
        keep = rng.random(ys.size) >= dropout
        jy = np.clip(ys[keep] + rng.integers(-1, 2, keep.sum()) * (rng.random(keep.sum()) < 0.3), 0, h - 1)
        jx = np.clip(xs[keep] + rng.integers(-1, 2, keep.sum()) * (rng.random(keep.sum()) < 0.3), 0, w - 1)
        m = np.zeros((h, w), dtype=np.uint8)
        m[jy, jx] = 1
        maps.append(m)
    return maps


def write_dataset(root, n_images: int = 12, seed: int = 0, height: int = 64, width: int = 96,
                  categories=CATEGORIES, n_annotators: int = 5, portrait_every: int = 4) -> Path:
    """Write PNG scenes plus annotator maps and a manifest; return the manifest path.

    Every ``portrait_every``-th scene is stored in portrait orientation.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "annotations").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_images):
        category = categories[i % len(categories)]
        rgb, truth = make_scene(rng, height, width, category)
        maps = annotate(rng, truth, n_annotators)
        if portrait_every and i % portrait_every == portrait_every - 1:
            rgb = np.rot90(rgb, k=1)
            maps = [np.rot90(m, k=1) for m in maps]
        name = f"scene{i:03d}"
        image_path = root / "images" / f"{name}.png"
        Image.fromarray(np.ascontiguousarray(rgb)).save(image_path)
        ann_paths = []
        for a, m in enumerate(maps):
            p = root / "annotations" / f"{name}_{a}.png"
            save_edge_map(p, np.ascontiguousarray(m))
            ann_paths.append(p)
        entries.append(ManifestEntry(image_path, tuple(ann_paths), category))
    manifest = root / "manifest.csv"
    write_manifest(manifest, entries)
    return manifest
