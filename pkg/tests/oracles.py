"""Straight-from-the-definitions reference implementations.

Deliberately slow and loop based; nothing here imports the package's
vectorised code paths.
"""
import math

import numpy as np


def brute_force_detect(img, delta, tau, offsets):
    """Literal per-pixel evaluation with explicit zero padding."""
    h, w = len(img), len(img[0])

    def at(i, j):
        if 0 <= i < h and 0 <= j < w:
            return int(img[i][j])
        return 0

    out = [[0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            centre = int(img[i][j])
            phi = 0
            for dy, dx in offsets:
                phi += abs(centre - at(i + dy, j + dx))
            if delta + phi == 0:
                m = 0.0
            else:
                m = phi / (delta + phi)
            out[i][j] = 1 if m > tau else 0
    return np.array(out, dtype=np.uint8)


def naive_confusion(detected, annotated):
    tp = fp = fn = tn = 0
    for row_d, row_a in zip(detected.tolist(), annotated.tolist()):
        for d, a in zip(row_d, row_a):
            if d and a:
                tp += 1
            elif d:
                fp += 1
            elif a:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def naive_ssim(f, g, size=11, sigma=1.5):
    """Explicit 2-D weighted window loop on {0,255}-scaled maps."""
    x = np.asarray(f, dtype=float) * 255.0
    y = np.asarray(g, dtype=float) * 255.0
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    half = (size - 1) / 2
    k = [math.exp(-((i - half) ** 2) / (2 * sigma**2)) for i in range(size)]
    s = sum(k)
    k = [v / s for v in k]
    weights = [[k[a] * k[b] for b in range(size)] for a in range(size)]
    h, w = x.shape
    total, count = 0.0, 0
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            mx = my = sxx = syy = sxy = 0.0
            for a in range(size):
                for b in range(size):
                    wt = weights[a][b]
                    xv, yv = x[i + a, j + b], y[i + a, j + b]
                    mx += wt * xv
                    my += wt * yv
            for a in range(size):
                for b in range(size):
                    wt = weights[a][b]
                    dx_, dy_ = x[i + a, j + b] - mx, y[i + a, j + b] - my
                    sxx += wt * dx_ * dx_
                    syy += wt * dy_ * dy_
                    sxy += wt * dx_ * dy_
            total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
            count += 1
    return total / count
