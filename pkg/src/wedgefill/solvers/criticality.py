"""Numerical slope estimates and the supporting-quadratic check at a limit point."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, qmc

DEFAULT_RADII = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


def sample_directions(dim, n_dirs=64, axes=None, seed=0):
    """Unit directions: scrambled Sobol points pushed through the Gaussian
    quantile and normalised, plus the signed coordinate axes.

    ``axes=None`` adds the axes only when ``dim <= 256``.
    """
    dirs = []
    if n_dirs > 0:
        pts = qmc.Sobol(d=dim, scramble=True, seed=seed).random(n_dirs)
        g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        dirs.append(g)
    if axes is None:
        axes = dim <= 256
    if axes:
        eye = np.eye(dim)
        dirs.extend([eye, -eye])
    return np.concatenate(dirs, axis=0)


def slope(F, x_star, radii=DEFAULT_RADII, n_dirs=64, axes=None, seed=0):
    """Estimate ``limsup max(0, F(x*) - F(x* + dx)) / |dx|``.

    Difference quotients are evaluated along sampled unit directions at each
    radius; the estimate is the largest quotient at the smallest radius whose
    differences still rise above round-off, clamped at zero.
    """
    x_star = np.asarray(x_star, dtype=float)
    shape = x_star.shape
    f0 = float(F(x_star))
    floor = 64.0 * np.finfo(float).eps * max(1.0, abs(f0))
    dirs = sample_directions(x_star.size, n_dirs, axes, seed)
    estimate = 0.0
    for r in sorted(radii, reverse=True):
        diffs = np.array([f0 - float(F(x_star + r * d.reshape(shape))) for d in dirs])
        if np.max(np.abs(diffs)) <= floor:
            break
        resolved = np.where(np.abs(diffs) > floor, diffs, 0.0)
        estimate = max(0.0, float(resolved.max()) / r)
    return estimate


@dataclass
class ConeReport:
    worst_margin: float
    violations: int
    samples: int
    slack: float
    energy_star: float

    @property
    def ok(self):
        return self.violations == 0


def cone_bound_check(E_x, x_star, tau_x, samples=100, radius=1e-2, seed=0, nonneg=False,
                     rel_slack=1e-6):
    """Check ``E(x*) <= E(x) + 2 tau_x |x - x*|^2`` on random ``x`` near ``x*``.

    ``E_x`` is the energy as a function of ``x`` alone (the other block held at
    its limit).  Perturbations have norm ``radius``; with ``nonneg`` they are
    clipped back to ``x >= 0``.  The margin is the right side minus the left.
    """
    x_star = np.asarray(x_star, dtype=float)
    e_star = float(E_x(x_star))
    slack = rel_slack * abs(e_star)
    rng = np.random.Generator(np.random.Philox(seed))
    worst = math.inf
    bad = 0
    for _ in range(samples):
        d = rng.standard_normal(x_star.shape)
        d *= radius / max(np.linalg.norm(d), 1e-300)
        x = x_star + d
        if nonneg:
            x = np.maximum(x, 0.0)
        margin = float(E_x(x)) + 2.0 * tau_x * float(np.sum((x - x_star) ** 2)) - e_star
        worst = min(worst, margin)
        if margin < -slack:
            bad += 1
    return ConeReport(worst, bad, samples, slack, e_star)
