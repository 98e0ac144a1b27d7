"""Parallel-beam X-ray transform, its matched adjoint and sub-sampling masks.

Conventions
-----------
Images are 2D arrays indexed ``[row, col]``; the grid is centred on the
origin, column ``j`` sits at ``x = (j - (W-1)/2) * pixel_size`` and row ``i``
at ``y = ((H-1)/2 - i) * pixel_size`` (row 0 on top).

Sinograms are 2D arrays indexed ``[angle, detector]`` (angle-major).  The view
at angle ``theta`` integrates along the lines
``x cos(theta) + y sin(theta) = s``, so the 0 degree view sums image columns.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

__all__ = [
    "ProjectionGeometry",
    "Projector",
    "default_detector_count",
    "parallel_geometry",
    "get_projector",
    "forward_project",
    "back_project",
    "wedge_angles",
    "make_limited_angle_mask",
    "apply_mask",
]


def default_detector_count(width, height, pixel_size=1.0, detector_spacing=1.0):
    """Smallest odd bin count covering the grid diagonal, plus one bin each side.

    Gives 287 bins for a 200x200 grid and 173 for 120x120.
    """
    half_diag = 0.5 * max(width, height) * pixel_size * math.sqrt(2.0)
    return 2 * math.ceil(half_diag / detector_spacing) + 3


@dataclass(frozen=True)
class ProjectionGeometry:
    """View angles (degrees, within one 180 degree period) and a flat detector."""

    angles: tuple
    detector_count: int
    detector_spacing: float = 1.0
    detector_offset: float = 0.0

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(self.angles))
        object.__setattr__(self, "angles", angles)
        if len(angles) == 0:
            raise ConfigurationError("geometry needs at least one angle")
        if int(self.detector_count) < 1:
            raise ConfigurationError("detector_count must be >= 1")
        object.__setattr__(self, "detector_count", int(self.detector_count))
        if self.detector_spacing <= 0:
            raise ConfigurationError("detector_spacing must be positive")
        a = np.asarray(angles)
        if np.any(np.diff(a) <= 0):
            raise ConfigurationError("angles must be strictly increasing")
        if a[0] < 0 or a[-1] >= 180:
            raise ConfigurationError("angles must lie in [0, 180)")

    @property
    def shape(self):
        """Shape of a sinogram array, ``(n_angles, detector_count)``."""
        return (len(self.angles), self.detector_count)

    @property
    def detector_positions(self):
        k = np.arange(self.detector_count)
        return (k - 0.5 * (self.detector_count - 1)) * self.detector_spacing + self.detector_offset

    def subset(self, kept):
        """Geometry restricted to the angles in ``kept``."""
        kept = sorted(float(a) for a in kept)
        return ProjectionGeometry(tuple(kept), self.detector_count,
                                  self.detector_spacing, self.detector_offset)


def parallel_geometry(n_angles=180, step=1.0, width=200, height=None, pixel_size=1.0,
                      detector_count=None, detector_spacing=1.0, start=0.0):
    """Evenly spaced views ``start, start+step, ...`` with default detector sizing."""
    height = width if height is None else height
    if detector_count is None:
        detector_count = default_detector_count(width, height, pixel_size, detector_spacing)
    angles = start + step * np.arange(n_angles)
    return ProjectionGeometry(tuple(angles), detector_count, detector_spacing)


def _view_matrix(theta, shape, pixel_size, s):
    """COO triplets (bin, pixel, weight) of one Joseph-interpolated view."""
    H, W = shape
    c, sn = math.cos(theta), math.sin(theta)
    nbins = s.size
    if abs(c) >= abs(sn):
        # step over rows, interpolate along x
        y = (0.5 * (H - 1) - np.arange(H)) * pixel_size
        x = (s[:, None] - y[None, :] * sn) / c
        frac = x / pixel_size + 0.5 * (W - 1)
        lo = np.floor(frac).astype(np.int64)
        w = frac - lo
        step = pixel_size / abs(c)
        rows = np.broadcast_to(np.arange(nbins)[:, None], lo.shape)
        line = np.broadcast_to(np.arange(H)[None, :], lo.shape)
        out = []
        for j, wt in ((lo, 1.0 - w), (lo + 1, w)):
            ok = (j >= 0) & (j < W) & (wt > 0)
            out.append((rows[ok], line[ok] * W + j[ok], step * wt[ok]))
    else:
        # step over columns, interpolate along y
        x = (np.arange(W) - 0.5 * (W - 1)) * pixel_size
        y = (s[:, None] - x[None, :] * c) / sn
        frac = 0.5 * (H - 1) - y / pixel_size
        lo = np.floor(frac).astype(np.int64)
        w = frac - lo
        step = pixel_size / abs(sn)
        rows = np.broadcast_to(np.arange(nbins)[:, None], lo.shape)
        line = np.broadcast_to(np.arange(W)[None, :], lo.shape)
        out = []
        for i, wt in ((lo, 1.0 - w), (lo + 1, w)):
            ok = (i >= 0) & (i < H) & (wt > 0)
            out.append((rows[ok], i[ok] * W + line[ok], step * wt[ok]))
    r = np.concatenate([o[0] for o in out])
    p = np.concatenate([o[1] for o in out])
    v = np.concatenate([o[2] for o in out])
    return r, p, v


class Projector:
    """Joseph-style parallel-beam projector stored as a sparse matrix.

    ``forward`` and ``adjoint`` use the same matrix, so the pair is an exact
    transpose up to floating point summation order.

    Parameters
    ----------
    geometry : ProjectionGeometry
    image_shape : tuple of int
        ``(height, width)`` of the reconstruction grid.
    pixel_size : float
        Side length of one pixel in the detector's length units.
    """

    def __init__(self, geometry, image_shape, pixel_size=1.0):
        H, W = (int(n) for n in image_shape)
        if H < 1 or W < 1:
            raise ConfigurationError("image must have at least one pixel")
        if pixel_size <= 0:
            raise ConfigurationError("pixel_size must be positive")
        self.geometry = geometry
        self.image_shape = (H, W)
        self.pixel_size = float(pixel_size)
        self._check_extent()

        s = geometry.detector_positions
        rows, cols, vals = [], [], []
        for a, theta in enumerate(np.deg2rad(geometry.angles)):
            r, p, v = _view_matrix(theta, (H, W), self.pixel_size, s)
            rows.append(r + a * s.size)
            cols.append(p)
            vals.append(v)
        shape = (len(geometry.angles) * s.size, H * W)
        mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=shape)
        self.matrix = mat.tocsr()
        self.matrix.sum_duplicates()
        self._matrix_t = self.matrix.T.tocsr()

    def _check_extent(self):
        g = self.geometry
        H, W = self.image_shape
        half_diag = 0.5 * self.pixel_size * math.hypot(H, W)
        half_span = 0.5 * g.detector_count * g.detector_spacing
        lo = g.detector_offset - half_span
        hi = g.detector_offset + half_span
        tol = 0.5 * g.detector_spacing
        if lo > -half_diag + tol or hi < half_diag - tol:
            raise ConfigurationError(
                f"detector [{lo:.3g}, {hi:.3g}] does not cover the image diagonal "
                f"(half-length {half_diag:.3g}); use at least "
                f"{default_detector_count(W, H, self.pixel_size, g.detector_spacing)} bins")

    @property
    def sinogram_shape(self):
        return self.geometry.shape

    def forward(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != self.image_shape:
            raise ConfigurationError(f"image shape {u.shape} != projector grid {self.image_shape}")
        return (self.matrix @ u.ravel()).reshape(self.sinogram_shape)

    def adjoint(self, s):
        s = np.asarray(s, dtype=float)
        if s.shape != self.sinogram_shape:
            raise ConfigurationError(f"sinogram shape {s.shape} != {self.sinogram_shape}")
        return (self._matrix_t @ s.ravel()).reshape(self.image_shape)

    __call__ = forward

    @functools.cached_property
    def operator_norm(self):
        """Cached :meth:`norm` estimate."""
        return self.norm()

    def norm(self, iters=20, seed=0):
        """Operator 2-norm estimate by power iteration on R^T R."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(self.image_shape)
        x /= np.linalg.norm(x)
        val = 0.0
        for _ in range(iters):
            y = self.adjoint(self.forward(x))
            val = np.linalg.norm(y)
            if val == 0:
                return 0.0
            x = y / val
        return math.sqrt(val)


@functools.lru_cache(maxsize=8)
def get_projector(geometry, image_shape, pixel_size=1.0):
    """Cached :class:`Projector` for a geometry/grid pair."""
    return Projector(geometry, tuple(image_shape), pixel_size)


def forward_project(u, geometry, pixel_size=1.0):
    """Line integrals of ``u`` for every (angle, detector bin) of ``geometry``."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise ConfigurationError("image must be 2D")
    if not np.all(np.isfinite(u)):
        raise ConfigurationError("image contains non-finite values")
    return get_projector(geometry, u.shape, pixel_size).forward(u)


def back_project(s, geometry, image_shape, pixel_size=1.0):
    """Exact discrete adjoint of :func:`forward_project`."""
    return get_projector(geometry, tuple(image_shape), pixel_size).adjoint(s)


def wedge_angles(geometry, span, center=0.0):
    """Angles of ``geometry`` within ``span/2`` degrees of ``center`` (mod 180).

    ``span=60`` on a 1 degree grid keeps 60 views, contiguous modulo 180.
    """
    a = np.asarray(geometry.angles)
    d = (a - center + 90.0) % 180.0 - 90.0
    return tuple(a[(d >= -0.5 * span) & (d < 0.5 * span)])


def make_limited_angle_mask(geometry, kept_angles):
    """Boolean sinogram mask, true on the rows of ``kept_angles``."""
    kept = np.atleast_1d(np.asarray(kept_angles, dtype=float))
    if kept.size == 0:
        raise ConfigurationError("kept angle set is empty")
    angles = np.asarray(geometry.angles)
    rows = np.zeros(len(angles), dtype=bool)
    for a in kept:
        hit = np.flatnonzero(np.isclose(angles, a, rtol=0, atol=1e-9))
        if hit.size == 0:
            raise ConfigurationError(f"angle {a} is not part of the geometry")
        rows[hit[0]] = True
    return np.repeat(rows[:, None], geometry.detector_count, axis=1)


def apply_mask(mask, s):
    """Zero every entry of ``s`` outside the acquired region."""
    mask = np.asarray(mask, dtype=bool)
    s = np.asarray(s, dtype=float)
    if mask.shape != s.shape:
        raise ConfigurationError(f"mask shape {mask.shape} != sinogram shape {s.shape}")
    return np.where(mask, s, 0.0)
