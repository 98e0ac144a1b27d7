"""Image quality measures and the binarisation used for thresholded renders."""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d

from .errors import ConfigurationError

SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(x, ref):
    x = np.asarray(x, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if x.shape != ref.shape:
        raise ConfigurationError(f"shape mismatch {x.shape} vs {ref.shape}")
    return x, ref


def psnr(x, ref):
    """Peak signal-to-noise ratio in dB with peak ``max(ref)``; ``inf`` for identical inputs."""
    x, ref = _pair(x, ref)
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(float(ref.max()) ** 2 / mse)


def ssim_window(size=8, sigma=1.5):
    k = np.arange(size) - 0.5 * (size - 1)
    w = np.exp(-0.5 * (k / sigma) ** 2)
    w = np.outer(w, w)
    return w / w.sum()


def ssim(x, ref, size=8, sigma=1.5):
    """Mean structural similarity over all fully contained Gaussian windows."""
    x, ref = _pair(x, ref)
    if min(x.shape) < size:
        raise ConfigurationError(f"images smaller than the {size}x{size} window")
    L = float(ref.max() - ref.min())
    if L == 0.0:
        L = 1.0
    c1, c2 = (SSIM_K1 * L) ** 2, (SSIM_K2 * L) ** 2
    w = ssim_window(size, sigma)

    def filt(a):
        return convolve2d(a, w, mode="valid")

    mx, my = filt(x), filt(ref)
    sxx = filt(x * x) - mx * mx
    syy = filt(ref * ref) - my * my
    sxy = filt(x * ref) - mx * my
    smap = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx ** 2 + my ** 2 + c1) * (sxx + syy + c2))
    return float(np.clip(smap.mean(), -1.0, 1.0))


def dominant_levels(img, bins=64, min_separation=0.2):
    """The two most populated grey levels, at least ``min_separation`` of the range apart."""
    a = np.asarray(img, dtype=float).ravel()
    lo, hi = float(a.min()), float(a.max())
    if hi == lo:
        return lo, hi
    counts, edges = np.histogram(a, bins=bins, range=(lo, hi))
    centres = 0.5 * (edges[:-1] + edges[1:])
    first = int(np.argmax(counts))
    far = np.abs(centres - centres[first]) >= min_separation * (hi - lo)
    second = int(np.argmax(np.where(far, counts, -1)))
    return tuple(sorted((float(centres[first]), float(centres[second]))))


def threshold_midpoint(img, bins=64):
    """Binary image (0/1) split at the midpoint of the two dominant levels."""
    a = np.asarray(img, dtype=float)
    l0, l1 = dominant_levels(a, bins)
    if l0 == l1:
        return np.zeros_like(a)
    return (a > 0.5 * (l0 + l1)).astype(float)


def anisotropy_ratio(img):
    """Energy of differences down the columns over energy along the rows.

    Missing-wedge blur along the vertical axis pushes this below the
    ground-truth value.
    """
    a = np.asarray(img, dtype=float)
    gcol = np.diff(a, axis=0)
    grow = np.diff(a, axis=1)
    den = float((grow ** 2).sum())
    return float((gcol ** 2).sum()) / den if den > 0 else math.inf
