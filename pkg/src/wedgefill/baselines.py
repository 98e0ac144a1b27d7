"""Comparison reconstructions: filtered backprojection, SIRT and TV-regularised least squares."""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from . import regularizers as reg
from .errors import ConfigurationError
from .solvers.pdhg import DualBlock, PdhgProblem, pdhg_solve, prox_conj_l21, prox_conj_weighted_l2
from .tomo_core import get_projector

SIRT_FLOOR = 1e-8


def _acquired_rows(mask, geometry):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != geometry.shape:
        raise ConfigurationError(f"mask shape {mask.shape} != sinogram shape {geometry.shape}")
    return mask.any(axis=1)


def angle_weights(angles_deg):
    """Quadrature weights (radians), periodic in 180 degrees.

    Each view gets half the gap to each neighbour, with every half-gap capped
    at half the median spacing so that views bordering a missing wedge are
    not inflated.
    """
    a = np.asarray(angles_deg, dtype=float)
    if a.size == 1:
        return np.array([math.pi])
    nxt = np.roll(a, -1)
    nxt[-1] += 180.0
    prv = np.roll(a, 1)
    prv[0] -= 180.0
    cap = 0.5 * float(np.median(nxt - a))
    return np.deg2rad(np.minimum(0.5 * (nxt - a), cap) + np.minimum(0.5 * (a - prv), cap))


def ramp_filter(n_det, spacing, window="hann"):
    """Frequency response of the sampled Ram-Lak kernel on a zero-padded grid."""
    npad = 1 << int(math.ceil(math.log2(2 * n_det)))
    k = np.arange(npad)
    k = np.where(k > npad // 2, k - npad, k)
    h = np.zeros(npad)
    h[k == 0] = 1.0 / (4.0 * spacing ** 2)
    odd = (k % 2) == 1
    h[odd] = -1.0 / (math.pi ** 2 * k[odd] ** 2 * spacing ** 2)
    H = np.real(np.fft.fft(h)) * spacing
    if window == "hann":
        f = np.fft.fftfreq(npad, d=spacing)
        H *= 0.5 * (1.0 + np.cos(2.0 * math.pi * f * spacing))
    elif window not in (None, "ramlak", "none"):
        raise ConfigurationError(f"unknown filter window {window!r}")
    return H


def fbp(b, mask, geometry, image_shape, pixel_size=1.0, window="ramlak"):
    """Filtered backprojection over the acquired angles only.

    ``window="hann"`` apodises the ramp towards the Nyquist frequency.
    """
    b = np.asarray(b, dtype=float)
    rows = _acquired_rows(mask, geometry)
    if not rows.any():
        return np.zeros(tuple(image_shape))
    R = get_projector(geometry, tuple(image_shape), pixel_size)
    ds = geometry.detector_spacing
    H = ramp_filter(geometry.detector_count, ds, window)
    data = np.where(np.asarray(mask, dtype=bool), b, 0.0)[rows]
    padded = np.zeros((data.shape[0], H.size))
    padded[:, :data.shape[1]] = data
    q = np.real(np.fft.ifft(np.fft.fft(padded, axis=1) * H, axis=1))[:, :data.shape[1]]
    full = np.zeros(geometry.shape)
    full[rows] = q * angle_weights(np.asarray(geometry.angles)[rows])[:, None]
    return R.adjoint(full) * (ds / pixel_size ** 2)


def sirt(b, mask, geometry, iters, image_shape, pixel_size=1.0, x0=None, return_residuals=False):
    """Simultaneous iterative reconstruction with row/column-sum preconditioning."""
    if iters < 0:
        raise ConfigurationError("iters must be >= 0")
    R = get_projector(geometry, tuple(image_shape), pixel_size)
    m = np.asarray(mask, dtype=bool)
    _acquired_rows(m, geometry)
    bm = np.where(m, np.asarray(b, dtype=float), 0.0)
    Wrow = np.where(m, 1.0 / np.maximum(R.forward(np.ones(R.image_shape)), SIRT_FLOOR), 0.0)
    Ccol = 1.0 / np.maximum(R.adjoint(m.astype(float)), SIRT_FLOOR)
    u = np.zeros(R.image_shape) if x0 is None else np.array(x0, dtype=float)
    res = [float(np.linalg.norm(np.where(m, R.forward(u), 0.0) - bm))]
    for _ in range(int(iters)):
        r = bm - np.where(m, R.forward(u), 0.0)
        u = u + Ccol * R.adjoint(Wrow * r)
        if return_residuals:
            res.append(float(np.linalg.norm(np.where(m, R.forward(u), 0.0) - bm)))
    return (u, np.array(res)) if return_residuals else u


def tv_objective(u, b, mask, R, lam):
    m = np.asarray(mask, dtype=bool)
    r = np.where(m, R.forward(u) - b, 0.0)
    return 0.5 * float(np.vdot(r, r)) + (lam * reg.tv(u) if lam > 0 else 0.0)


def tv_reconstruct(b, mask, geometry, lam, iters, image_shape, pixel_size=1.0, x0=None,
                   tol=0.0, ratio=5.0, precondition=False, return_result=False):
    """``argmin_{u >= 0} 1/2 |S(Ru - b)|^2 + lam TV(u)`` by PDHG.

    The best-objective checkpoint is returned, so the objective never exceeds
    that of the starting image.
    """
    if lam < 0:
        raise ConfigurationError("lam must be >= 0")
    R = get_projector(geometry, tuple(image_shape), pixel_size)
    m = np.asarray(mask, dtype=bool)
    _acquired_rows(m, geometry)
    bm = np.where(m, np.asarray(b, dtype=float), 0.0)
    blocks = [DualBlock(R.forward, R.adjoint, prox_conj_weighted_l2(m.astype(float), bm),
                        norm=R.operator_norm, name="data", matrix=R.matrix)]
    if lam > 0:
        D0, D1 = reg.grad_matrix(R.image_shape)
        blocks.append(DualBlock(reg.grad, lambda y: -reg.div(y), prox_conj_l21(lam),
                                norm=math.sqrt(8.0), name="tv",
                                matrix=sp.vstack([D0, D1], format="csr"), coupled_components=True))
    prob = PdhgProblem(blocks, lambda x, t: np.maximum(x, 0.0),
                       lambda x: tv_objective(x, bm, m, R, lam),
                       max_iter=int(iters), tol=tol, ratio=ratio, precondition=precondition)
    x0 = np.zeros(R.image_shape) if x0 is None else np.maximum(np.asarray(x0, dtype=float), 0.0)
    res = pdhg_solve(prob, x0)
    return res if return_result else res.x
