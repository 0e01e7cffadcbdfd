"""Canny edge detector used as the comparison baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image_core import InvalidInputError, as_gray

__all__ = ["CannyConfig", "canny", "gradient", "non_maximum_suppression", "hysteresis"]


@dataclass(frozen=True)
class CannyConfig:
    """Defaults are 10% and 20% of the 8-bit maximum with unit smoothing."""

    sigma: float = 1.0
    low_threshold: float = 0.1 * 255
    high_threshold: float = 0.2 * 255

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidInputError("sigma must be positive")
        if not 0 <= self.low_threshold <= self.high_threshold:
            raise InvalidInputError("need 0 <= low_threshold <= high_threshold")


def gradient(img: np.ndarray, sigma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Smoothed Sobel derivatives ``(gy, gx, magnitude)`` of a [0, 255] image."""
    x = as_gray(img).astype(np.float64)
    smooth = ndimage.gaussian_filter(x, sigma, mode="reflect", truncate=4.0)
    # unnormalised 3x3 kernels, so thresholds compare like a [0, 1] image against 0.1/0.2
    gy = ndimage.sobel(smooth, axis=0, mode="reflect")
    gx = ndimage.sobel(smooth, axis=1, mode="reflect")
    return gy, gx, np.hypot(gx, gy)


def non_maximum_suppression(gy: np.ndarray, gx: np.ndarray, mag: np.ndarray) -> np.ndarray:
    """Keep pixels that are maxima along their gradient direction, in 4 sectors.

    Ties are broken toward the neighbour on the negative side so a symmetric
    step yields a single-pixel line.
    """
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="constant")
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # (dy, dx) of the neighbour on the positive side for each sector
    sectors = {
        0: ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        45: ((angle >= 22.5) & (angle < 67.5), (1, 1)),
        90: ((angle >= 67.5) & (angle < 112.5), (1, 0)),
        135: ((angle >= 112.5) & (angle < 157.5), (1, -1)),
    }
    keep = np.zeros((h, w), dtype=bool)
    for sel, (dy, dx) in sectors.values():
        ahead = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        behind = padded[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        keep |= sel & (mag > behind) & (mag >= ahead)
    return keep & (mag > 0)


def hysteresis(candidates: np.ndarray, mag: np.ndarray, low: float, high: float) -> np.ndarray:
    """Weak pixels survive only when 8-connected to a strong one."""
    weak = candidates & (mag >= low)
    strong = weak & (mag >= high)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(mag.shape, dtype=bool)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def canny(img: np.ndarray, config: CannyConfig = CannyConfig()) -> np.ndarray:
    arr = as_gray(img)
    if arr.size == 0:
        raise InvalidInputError("empty image")
    gy, gx, mag = gradient(arr, config.sigma)
    nms = non_maximum_suppression(gy, gx, mag)
    return hysteresis(nms, mag, config.low_threshold, config.high_threshold).astype(np.uint8)
