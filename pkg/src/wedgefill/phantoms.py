"""Synthetic ground truths and the additive noise model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# Toft's modified Shepp-Logan: intensity, semi-axes a, b, centre x0, y0, angle (deg)
MODIFIED_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)


def _subpixel_coords(width, height, supersample):
    """Pixel-centred coordinates in pixel units, one plane per sub-sample."""
    k = (np.arange(supersample) + 0.5) / supersample - 0.5
    x = np.arange(width) - 0.5 * (width - 1)
    y = 0.5 * (height - 1) - np.arange(height)
    xs = (x[None, :, None, None] + k[None, None, None, :])
    ys = (y[:, None, None, None] - k[None, None, :, None])
    return np.broadcast_arrays(xs, ys)


def concentric_rings(width, height, radii, intensities, supersample=4):
    """Nested discs painted outside-in; the value inside radius ``radii[k]``
    (and outside ``radii[k+1]``) is ``intensities[k]``.

    Pixel values are area fractions estimated on a ``supersample`` grid.
    """
    radii = [float(r) for r in radii]
    intensities = [float(c) for c in intensities]
    if len(radii) != len(intensities):
        raise ConfigurationError("radii and intensities differ in length")
    if any(r <= 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
        raise ConfigurationError("radii must be positive and strictly decreasing")
    if radii and radii[0] > 0.5 * min(width, height):
        raise ConfigurationError(f"radius {radii[0]} exceeds the grid half-extent")
    img = np.zeros((height, width))
    if not radii:
        return img
    xs, ys = _subpixel_coords(width, height, supersample)
    r = np.hypot(xs, ys)
    val = np.zeros(r.shape)
    for rad, c in zip(radii, intensities):
        val = np.where(r <= rad, c, val)
    return val.mean(axis=(2, 3))


def two_rings(n, supersample=4):
    """Two concentric unit-intensity rings scaled to an ``n x n`` grid."""
    f = np.array([0.42, 0.34, 0.24, 0.15]) * n
    return concentric_rings(n, n, f, [1.0, 0.0, 1.0, 0.0], supersample)


def shepp_logan_modified(width, height=None, supersample=1):
    """Modified Shepp-Logan phantom with ``max == 1`` and values in ``[0, 1]``."""
    height = width if height is None else height
    if width < 16 or height < 16:
        raise ConfigurationError("Shepp-Logan needs at least 16x16 pixels")
    xs, ys = _subpixel_coords(width, height, supersample)
    xs = xs / (0.5 * width)
    ys = ys / (0.5 * height)
    val = np.zeros(xs.shape)
    for amp, a, b, x0, y0, phi in MODIFIED_SHEPP_LOGAN:
        c, s = np.cos(np.deg2rad(phi)), np.sin(np.deg2rad(phi))
        dx, dy = xs - x0, ys - y0
        xr = dx * c + dy * s
        yr = -dx * s + dy * c
        val = val + amp * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    img = np.clip(val.mean(axis=(2, 3)), 0.0, None)
    return img / img.max()


def faceted_particle(width, height=None, supersample=4):
    """Homogeneous convex particle with straight facets and one rounded corner.

    Stand-in for the experimental bipyramid slice; the left corner is
    rounded, the others are sharp.
    """
    height = width if height is None else height
    xs, ys = _subpixel_coords(width, height, supersample)
    s = 0.5 * min(width, height)
    x, y = xs / s, ys / s
    # rotated square (diamond) stretched horizontally, with a flat bottom facet
    inside = (np.abs(x) / 0.75 + np.abs(y) / 0.55 <= 1.0) & (y >= -0.4)
    # round the left corner with a disc tangent to both facets
    rc = 0.18
    half_angle = np.arctan2(0.55, 0.75)
    cx = -0.75 + rc / np.sin(half_angle)
    x_tangent = cx - rc * np.sin(half_angle)
    corner = (x < x_tangent) & (np.hypot(x - cx, y) > rc)
    val = (inside & ~corner).astype(float)
    return val.mean(axis=(2, 3))


def add_gaussian_noise(s, level_fraction, seed):
    """Add i.i.d. N(0, (level_fraction * max(s))^2) noise, reproducible per seed.

    Uses the counter-based Philox generator, so a given seed yields the same
    samples on every platform.
    """
    if level_fraction < 0:
        raise ConfigurationError("noise level must be >= 0")
    s = np.asarray(s, dtype=float)
    if level_fraction == 0:
        return s.copy()
    rng = np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))
    return s + level_fraction * float(s.max()) * rng.standard_normal(s.shape)


@dataclass
class StripePhantom:
    """Diagonal stripe test case for line continuation.

    ``known`` is true outside the square hole; ``c1`` is 0 on bands along the
    two stripe edges and 1 elsewhere, with ``e1`` the unit normal of the
    stripe (constant over the image).
    """

    clean: np.ndarray
    noisy: np.ndarray
    known: np.ndarray
    c1: np.ndarray
    e1: np.ndarray
    edge_separation: float
    hole_width: int


def stripe_phantom_pair(n=64, half_width=5.5, hole=24, band=2.5, noise=0.1, seed=0):
    """Stripe along ``i + j = const`` through the centre of an ``n x n`` grid."""
    i, j = np.mgrid[:n, :n]
    t = (i + j) - (n - 1)  # signed offset along the normal, in diagonal steps
    clean = (np.abs(t) < half_width).astype(float)
    lo = (n - hole) // 2
    known = np.ones((n, n), dtype=bool)
    known[lo:lo + hole, lo:lo + hole] = False
    near_edge = np.minimum(np.abs(t - half_width), np.abs(t + half_width)) <= band
    c1 = np.where(near_edge, 0.0, 1.0)
    e1 = np.array([1.0, 1.0]) / np.sqrt(2.0)
    # edges at i + j = n - 1 +- half_width; at fixed column they are 2*half_width rows apart
    sep = 2.0 * half_width
    rng = np.random.Generator(np.random.Philox(seed))
    noisy = clean + noise * rng.standard_normal(clean.shape)
    return StripePhantom(clean, noisy, known, c1, e1, sep, hole)
