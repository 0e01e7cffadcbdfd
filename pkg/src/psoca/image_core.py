"""Image representation, preprocessing and annotation handling.

Images are plain numpy arrays indexed ``[row, col]``:

* gray images are ``uint8`` with shape ``(height, width)``;
* edge maps are ``uint8`` holding only 0 and 1;
* probability maps are ``float64`` in ``[0, 1]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

__all__ = [
    "CATEGORIES",
    "InvalidInputError",
    "DataError",
    "ManifestEntry",
    "DatasetManifest",
    "as_gray",
    "as_edge_map",
    "to_grayscale",
    "standardize_orientation",
    "resize_max_side",
    "resize_bilinear",
    "letterbox",
    "pad_zero",
    "crop_border",
    "average_annotations",
    "threshold_probability",
    "load_image",
    "load_edge_map",
    "save_gray",
    "save_edge_map",
    "load_manifest",
    "write_manifest",
]

CATEGORIES = ("animals", "landscapes", "objects", "people")

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class DataError(Exception):
    """Raised when files on disk are missing or malformed."""


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def as_gray(img) -> np.ndarray:
    """Validate and return a 2-D uint8 intensity array."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise InvalidInputError(f"gray image must be 2-D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise InvalidInputError("intensities must lie in [0, 255]")
    return arr.astype(np.uint8, copy=False)


def as_edge_map(edges) -> np.ndarray:
    arr = np.asarray(edges)
    if arr.ndim != 2:
        raise InvalidInputError(f"edge map must be 2-D, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise InvalidInputError("edge map values must be 0 or 1")
    return arr.astype(np.uint8, copy=False)


def to_grayscale(rgb) -> np.ndarray:
    """Convert an ``(H, W, 3)`` RGB array to luma with BT.601 weights."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"expected 3 channels, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise InvalidInputError("channel values must lie in [0, 255]")
    rgbf = arr.astype(np.float64)
    luma = (
        LUMA_WEIGHTS[0] * rgbf[..., 0]
        + LUMA_WEIGHTS[1] * rgbf[..., 1]
        + LUMA_WEIGHTS[2] * rgbf[..., 2]
    )
    return np.clip(_round_half_up(luma), 0, 255).astype(np.uint8)


def standardize_orientation(img: np.ndarray) -> np.ndarray:
    """Rotate portrait images 90 degrees clockwise; square and landscape pass through."""
    arr = np.asarray(img)
    if arr.shape[0] > arr.shape[1]:
        return np.ascontiguousarray(np.rot90(arr, k=-1))
    return arr


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resampling on pixel centres, returning float64.

    Source coordinates follow the half-pixel convention and are clamped to
    the image, so a constant input stays constant.
    """
    src = np.asarray(img, dtype=np.float64)
    in_h, in_w = src.shape
    if in_h == 0 or in_w == 0:
        raise InvalidInputError("cannot resize an empty image")
    if height < 1 or width < 1:
        raise InvalidInputError("output dimensions must be positive")

    def axis(n_out, n_in):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(height, in_h)
    x0, x1, fx = axis(width, in_w)
    fy = fy[:, None]
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def target_size(height: int, width: int, max_side: int) -> tuple[int, int]:
    if max_side < 1:
        raise InvalidInputError("max_side must be >= 1")
    if height == 0 or width == 0:
        raise InvalidInputError("cannot resize an empty image")
    if width >= height:
        short = int(_round_half_up(np.float64(height) * max_side / width))
        return max(short, 1), max_side
    short = int(_round_half_up(np.float64(width) * max_side / height))
    return max_side, max(short, 1)


def resize_max_side(img: np.ndarray, max_side: int) -> np.ndarray:
    """Scale so the larger side equals ``max_side``, keeping the aspect ratio."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidInputError("expected a non-empty 2-D image")
    h, w = target_size(*arr.shape, max_side)
    if (h, w) == arr.shape:
        return arr.copy()
    out = resize_bilinear(arr, h, w)
    return np.clip(_round_half_up(out), 0, 255).astype(np.uint8)


def letterbox(img: np.ndarray, side: int) -> np.ndarray:
    """Zero-pad to ``side x side``, centring the content (extra pixel bottom/right)."""
    arr = np.asarray(img)
    h, w = arr.shape
    if h > side or w > side:
        raise InvalidInputError(f"{h}x{w} image does not fit a {side}x{side} box")
    top, left = (side - h) // 2, (side - w) // 2
    out = np.zeros((side, side), dtype=arr.dtype)
    out[top:top + h, left:left + w] = arr
    return out


def pad_zero(img: np.ndarray, r: int) -> np.ndarray:
    if r not in (1, 2):
        raise InvalidInputError(f"unsupported radius {r}")
    return np.pad(np.asarray(img), r, mode="constant", constant_values=0)


def crop_border(img: np.ndarray, r: int) -> np.ndarray:
    return np.asarray(img)[r:-r, r:-r]


def average_annotations(maps: Sequence[np.ndarray]) -> np.ndarray:
    """Per-pixel fraction of annotators that marked an edge."""
    if len(maps) == 0:
        raise InvalidInputError("need at least one annotation map")
    stack = [as_edge_map(m) for m in maps]
    shape = stack[0].shape
    if any(m.shape != shape for m in stack):
        raise InvalidInputError("annotation maps differ in size")
    total = np.zeros(shape, dtype=np.int64)
    for m in stack:
        total += m
    return total / len(stack)


def threshold_probability(pmap: np.ndarray, p: float) -> np.ndarray:
    """Edge wherever the probability strictly exceeds ``p``."""
    return (np.asarray(pmap) > p).astype(np.uint8)


# --------------------------------------------------------------------- I/O


def load_image(path) -> np.ndarray:
    """Load a PNG (or any Pillow format) as a gray uint8 array.

    RGB inputs go through :func:`to_grayscale` so the luma weights stay ours.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image not found: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("RGB", "RGBA", "P", "CMYK", "YCbCr"):
                return to_grayscale(np.asarray(im.convert("RGB")))
            if im.mode in ("L", "1"):
                return np.asarray(im.convert("L"), dtype=np.uint8)
            arr = np.asarray(im)
    except (OSError, SyntaxError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    # 16-bit and other single-channel modes
    if arr.ndim != 2:
        raise DataError(f"unsupported image layout {arr.shape} in {path}")
    if arr.max(initial=0) > 255:
        raise DataError(f"{path}: values exceed 8 bits")
    return arr.astype(np.uint8)


def load_edge_map(path) -> np.ndarray:
    """Load an annotation PNG; any nonzero value counts as an edge."""
    return (load_image(path) > 0).astype(np.uint8)


def save_gray(path, img: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(as_gray(img))).save(Path(path))


def save_edge_map(path, edges: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(as_edge_map(edges) * np.uint8(255))).save(Path(path))


@dataclass(frozen=True)
class ManifestEntry:
    image: Path
    annotations: tuple[Path, ...]
    category: str

    @property
    def name(self) -> str:
        return self.image.stem


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def category_counts(self) -> dict[str, int]:
        counts = {c: 0 for c in CATEGORIES}
        for e in self.entries:
            counts[e.category] += 1
        return {c: n for c, n in counts.items() if n}

    def by_category(self, category: str) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.category == category]


def load_manifest(path) -> DatasetManifest:
    """Parse a ``image,annotations,category`` CSV.

    Relative paths resolve against the manifest's directory. Annotations are
    ``;``-separated.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    entries = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"image", "annotations", "category"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            category = row["category"].strip().lower()
            if category not in CATEGORIES:
                raise DataError(f"{path}:{lineno}: unknown category {row['category']!r}")
            image = base / row["image"].strip()
            annotations = tuple(
                base / a.strip() for a in row["annotations"].split(";") if a.strip()
            )
            if not annotations:
                raise DataError(f"{path}:{lineno}: entry has no annotation maps")
            for p in (image, *annotations):
                if not p.is_file():
                    raise DataError(f"{path}:{lineno}: file not found: {p}")
            entries.append(ManifestEntry(image, annotations, category))
    return DatasetManifest(entries)


def write_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: Path) -> str:
        p = Path(p).resolve()
        try:
            return p.relative_to(base).as_posix()
        except ValueError:
            return p.as_posix()

    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "annotations", "category"])
        for e in entries:
            writer.writerow([rel(e.image), ";".join(rel(a) for a in e.annotations), e.category])
