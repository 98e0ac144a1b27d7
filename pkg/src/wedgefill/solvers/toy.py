"""Two-scalar test bed ``E(x, y) = max(x, y) + x^2 + y^2``.

Alternating exact proximal minimisation started at the origin never moves,
although the origin is not critical for ``E`` jointly.  The joint minimiser is
``(-1/4, -1/4)``; every diagonal point ``(t, t)`` with ``-1/2 <= t <= 0`` is
critical along each axis separately, and the iteration started at
``(-1, -1)`` stops at ``(-1/2, -1/2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def toy_energy(x, y):
    return max(x, y) + x * x + y * y


def toy_subgradient(x, y):
    """Clarke subdifferential of ``E`` at ``(x, y)`` as a list of extreme points."""
    base = np.array([2.0 * x, 2.0 * y])
    if x > y:
        return [base + [1.0, 0.0]]
    if y > x:
        return [base + [0.0, 1.0]]
    return [base + [1.0, 0.0], base + [0.0, 1.0]]


def is_critical(x, y, tol=1e-12):
    """Whether 0 lies in the convex hull of the subgradient extreme points."""
    pts = toy_subgradient(x, y)
    if len(pts) == 1:
        return bool(np.linalg.norm(pts[0]) <= tol)
    a, b = pts
    d = b - a
    t = np.clip(-np.dot(a, d) / np.dot(d, d), 0.0, 1.0)
    return bool(np.linalg.norm(a + t * d) <= tol)


def is_axis_critical(x, y, tol=1e-12):
    """Whether 0 is in the partial subdifferential in ``x`` and in ``y``."""
    def ok(a, b):
        lo, hi = 2.0 * a, 2.0 * a
        if a > b:
            lo = hi = 2.0 * a + 1.0
        elif a == b:
            hi = 2.0 * a + 1.0
        return lo - tol <= 0.0 <= hi + tol
    return ok(x, y) and ok(y, x)


JOINT_MINIMISER = (-0.25, -0.25)


def prox_step(a, c, tau):
    """``argmin_t max(t, c) + t^2 + tau (t - a)^2`` in closed form."""
    t1 = (2.0 * tau * a - 1.0) / (2.0 * (1.0 + tau))  # branch t >= c
    if t1 >= c:
        return t1
    t2 = tau * a / (1.0 + tau)  # branch t <= c
    if t2 <= c:
        return t2
    return c


@dataclass
class ToyState:
    x: float
    y: float
    trace: list = field(default_factory=list)

    @property
    def energies(self):
        return [toy_energy(x, y) for x, y in self.trace]


def run_toy_2axis(x0, y0, tau_x=1.0, tau_y=1.0, iters=100):
    """Alternate exact minimisation in ``x`` then ``y``; ``trace[0]`` is the start."""
    if not (np.isfinite(x0) and np.isfinite(y0)):
        raise ValueError("starting point must be finite")
    x, y = float(x0), float(y0)
    trace = [(x, y)]
    for _ in range(int(iters)):
        x = prox_step(x, y, tau_x)
        y = prox_step(y, x, tau_y)
        trace.append((x, y))
    return ToyState(x, y, trace)
