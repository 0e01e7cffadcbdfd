"""Edge-map agreement metrics.

DSC and the confusion counts work on {0, 1} maps. MSE, PSNR and SSIM scale
both maps to {0, 255} first, so the peak value is 255.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image_core import InvalidInputError, as_edge_map

__all__ = [
    "PEAK",
    "SSIM_WINDOW",
    "SSIM_SIGMA",
    "ConfusionCounts",
    "MetricReport",
    "confusion",
    "dsc",
    "mse",
    "psnr",
    "gaussian_window",
    "ssim",
    "evaluate_maps",
]

PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * PEAK) ** 2
SSIM_C2 = (0.03 * PEAK) ** 2


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class MetricReport:
    dsc: float
    psnr: float  # math.inf when the maps agree everywhere
    ssim: float
    mse: float


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_edge_map(a), as_edge_map(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"map sizes differ: {a.shape} vs {b.shape}")
    return a, b


def confusion(detected, annotated) -> ConfusionCounts:
    d, g = _pair(detected, annotated)
    d, g = d.astype(bool), g.astype(bool)
    tp = int(np.count_nonzero(d & g))
    fp = int(np.count_nonzero(d & ~g))
    fn = int(np.count_nonzero(~d & g))
    return ConfusionCounts(tp, fp, fn, d.size - tp - fp - fn)


def dsc(detected, annotated) -> float:
    """Dice coefficient; two empty maps count as perfect agreement."""
    c = confusion(detected, annotated)
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return 2 * c.tp / denom


def _scaled(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = _pair(a, b)
    return a.astype(np.float64) * PEAK, b.astype(np.float64) * PEAK


def mse(f, g) -> float:
    # mismatches contribute exactly 255**2 each
    a, b = _pair(f, g)
    return float(np.count_nonzero(a != b)) * PEAK**2 / a.size


def psnr(f, g) -> float:
    err = mse(f, g)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(PEAK**2 / err)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalised 1-D Gaussian taps."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    w = np.exp(-(x**2) / (2 * sigma**2))
    return w / w.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # separable weighted mean over every fully contained window
    view = np.lib.stride_tricks.sliding_window_view(img, taps.size, axis=1)
    rows = view @ taps
    view = np.lib.stride_tricks.sliding_window_view(rows, taps.size, axis=0)
    return view @ taps


def ssim(f, g, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """Mean SSIM over all ``window x window`` Gaussian-weighted windows.

    Uses the usual two-term form that follows from setting the structure
    constant to half the contrast constant.
    """
    x, y = _scaled(f, g)
    if x.shape[0] < window or x.shape[1] < window:
        raise InvalidInputError(f"maps of shape {x.shape} are smaller than the {window}px window")
    taps = gaussian_window(window, sigma)
    mu_x = _filter_valid(x, taps)
    mu_y = _filter_valid(y, taps)
    var_x = _filter_valid(x * x, taps) - mu_x * mu_x
    var_y = _filter_valid(y * y, taps) - mu_y * mu_y
    cov = _filter_valid(x * y, taps) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


def evaluate_maps(detected, annotated) -> MetricReport:
    err = mse(detected, annotated)
    return MetricReport(
        dsc=dsc(detected, annotated),
        psnr=math.inf if err == 0 else 10.0 * math.log10(PEAK**2 / err),
        ssim=ssim(detected, annotated),
        mse=err,
    )
