"""Primal-dual hybrid gradient for ``min_x G(x) + sum_i F_i(K_i x)``.

Each dual block carries its own step ``sigma_i = 1 / (ratio * sqrt(nb) * |K_i|^2)``
and the primal step is ``tau = ratio / sqrt(nb)``, so that
``tau * sum_i sigma_i |K_i|^2 = 1``; with the operator norms inflated by a
safety factor this is the usual convergence condition written for the
block-diagonally preconditioned operator.

When every block exposes its sparse matrix and ``precondition`` is set, the
steps are instead the diagonal ones built from absolute row and column sums
(``tau_j = ratio / sum_i |K_ij|``, ``sigma_i = 1 / (ratio * sum_j |K_ij|)``),
which converge for any ``ratio > 0`` and cope with strongly varying weights.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import SolverError

log = logging.getLogger(__name__)

NORM_SAFETY = 1.1


@dataclass
class DualBlock:
    """One ``F_i(K_i x)`` term.

    ``prox_conj(y, sigma)`` is the proximal map of ``sigma * F_i^*``.
    Set ``coupled_components`` when the dual is a ``(2, H, W)`` field whose
    prox mixes the two components (the (2,1)-norm ball); diagonal steps are
    then shared by both components of a pixel.
    """

    op: Callable
    adj: Callable
    prox_conj: Callable
    norm: Optional[float] = None
    name: str = ""
    matrix: Optional[object] = None
    coupled_components: bool = False


@dataclass
class PdhgProblem:
    """Saddle-point description handed to :func:`pdhg_solve`.

    Parameters
    ----------
    blocks : sequence of DualBlock
    prox_primal : callable ``(x, tau) -> x``
        Proximal map of ``tau * G``.
    objective : callable ``x -> float``
        Primal objective, evaluated every ``check_every`` iterations.
    strong_convexity : float
        Modulus of ``G``; when positive the steps are accelerated.
    forward_all, adjoint_all : callable, optional
        Fused ``x -> [K_i x]`` and ``[y_i] -> sum K_i^T y_i`` for blocks that
        share expensive work; the per-block ``op``/``adj`` are then only used
        for norm estimates.
    """

    blocks: Sequence[DualBlock]
    prox_primal: Callable
    objective: Callable
    max_iter: int = 200
    tol: float = 1e-6
    ratio: float = 1.0
    strong_convexity: float = 0.0
    check_every: int = 10
    norm_iters: int = 20
    precondition: bool = False
    forward_all: Optional[Callable] = None
    adjoint_all: Optional[Callable] = None


@dataclass
class PdhgResult:
    x: np.ndarray
    duals: list
    iterations: int
    converged: bool
    objective: float
    history: list = field(default_factory=list)

    @property
    def warning(self):
        """True when the iteration cap was reached before the tolerance."""
        return not self.converged


def power_norm(op, adj, x_like, iters=20, seed=0):
    """Estimate ``|K|`` by power iteration on ``K^T K``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(np.shape(x_like))
    x /= np.linalg.norm(x)
    val = 0.0
    for _ in range(iters):
        y = adj(op(x))
        val = float(np.linalg.norm(y))
        if val == 0.0 or not math.isfinite(val):
            return 0.0
        x = y / val
    return math.sqrt(val)


def _diagonal_steps(prob, x_like):
    shape = np.shape(x_like)
    col = np.zeros(int(np.prod(shape)))
    sigmas = []
    for blk in prob.blocks:
        a = abs(blk.matrix)
        col += np.asarray(a.sum(axis=0)).ravel()
        row = np.asarray(a.sum(axis=1)).ravel()
        sig = np.divide(1.0, prob.ratio * row, out=np.zeros_like(row), where=row > 0)
        sig = sig.reshape(np.shape(blk.op(np.zeros(shape))))
        if blk.coupled_components:
            # a smaller sigma keeps the step condition; the ball projection
            # is only the right prox for a step shared by both components;
            # empty rows (sigma 0) carry no constraint and are skipped
            shared = np.where(sig > 0, sig, np.inf).min(axis=0)
            shared[np.isinf(shared)] = 0.0
            sig = np.broadcast_to(shared, sig.shape).copy()
        sigmas.append(sig)
    tau = np.divide(prob.ratio, col, out=np.full_like(col, prob.ratio), where=col > 0)
    return tau.reshape(shape), sigmas


def step_sizes(prob, x_like):
    """Primal step and per-block dual steps; fills in missing block norms."""
    if prob.precondition and all(blk.matrix is not None for blk in prob.blocks):
        return _diagonal_steps(prob, x_like)
    nb = len(prob.blocks)
    norms = []
    for blk in prob.blocks:
        if blk.norm is None:
            blk.norm = power_norm(blk.op, blk.adj, x_like, prob.norm_iters)
        norms.append(NORM_SAFETY * blk.norm)
    tau = prob.ratio / math.sqrt(max(nb, 1))
    sigmas = [1.0 / (prob.ratio * math.sqrt(nb) * n * n) if n > 0 else 0.0 for n in norms]
    return tau, sigmas


def pdhg_solve(prob, x0, duals=None):
    """Run PDHG from ``x0`` (and optional dual warm start).

    Returns the iterate with the lowest objective among the checkpoints,
    the starting point included, so the reported objective never exceeds
    the starting one.

    Raises
    ------
    SolverError
        If the objective becomes non-finite or grows by more than 1e3x.
    """
    x = np.array(x0, dtype=float)
    tau, sigmas = step_sizes(prob, x)
    if duals is None:
        duals = [np.zeros_like(blk.op(x)) for blk in prob.blocks]
    else:
        duals = [np.array(y, dtype=float) for y in duals]

    obj0 = float(prob.objective(x))
    if not math.isfinite(obj0):
        raise SolverError("objective at the starting point is not finite",
                          diagnostics={"objective": obj0})
    best_x, best_obj, best_duals = x.copy(), obj0, [y.copy() for y in duals]
    history = [obj0]
    last = obj0
    xbar = x
    gamma = prob.strong_convexity if np.isscalar(tau) else 0.0
    converged = False
    it = 0
    for it in range(1, prob.max_iter + 1):
        grad = None
        if prob.forward_all is not None:
            kx = prob.forward_all(xbar)
            for i, blk in enumerate(prob.blocks):
                if not (np.isscalar(sigmas[i]) and sigmas[i] == 0.0):
                    duals[i] = blk.prox_conj(duals[i] + sigmas[i] * kx[i], sigmas[i])
            grad = prob.adjoint_all(duals)
        else:
            for i, blk in enumerate(prob.blocks):
                if np.isscalar(sigmas[i]) and sigmas[i] == 0.0:
                    continue
                duals[i] = blk.prox_conj(duals[i] + sigmas[i] * blk.op(xbar), sigmas[i])
                term = blk.adj(duals[i])
                grad = term if grad is None else grad + term
        x_new = prob.prox_primal(x if grad is None else x - tau * grad, tau)
        theta = 1.0
        if gamma > 0:
            theta = 1.0 / math.sqrt(1.0 + 2.0 * gamma * tau)
            tau *= theta
            sigmas = [s / theta for s in sigmas]
        xbar = x_new + theta * (x_new - x)
        x = x_new

        if it % prob.check_every == 0 or it == prob.max_iter:
            obj = float(prob.objective(x))
            history.append(obj)
            if not math.isfinite(obj) or (obj0 > 0 and obj > 1e3 * obj0):
                raise SolverError(
                    "PDHG diverged",
                    diagnostics={"iteration": it, "objective": obj, "start": obj0,
                                 "ratio": prob.ratio})
            if obj < best_obj:
                best_x, best_obj, best_duals = x.copy(), obj, [y.copy() for y in duals]
            if abs(last - obj) <= prob.tol * max(abs(obj), 1e-300):
                converged = True
                break
            last = obj
    if not converged:
        log.debug("pdhg: iteration cap %d reached (objective %.6g)", prob.max_iter, best_obj)
    return PdhgResult(best_x, best_duals, it, converged, best_obj, history)


# common proximal maps ------------------------------------------------------

def proj_ball_21(y, radius):
    """Project each 2-vector of ``y`` (shape ``(2, H, W)``) onto the ball of ``radius``."""
    if radius <= 0:
        return np.zeros_like(y)
    n = np.sqrt(y[0] ** 2 + y[1] ** 2)
    return y / np.maximum(1.0, n / radius)


def prox_conj_weighted_l2(weight, target):
    """Prox of ``sigma * F^*`` for ``F(z) = 1/2 sum weight * (z - target)^2``.

    Entries with zero weight force the dual to zero.
    """
    weight = np.asarray(weight, dtype=float)

    def prox(y, sigma):
        den = weight + sigma
        return np.divide(weight * (y - sigma * target), den, out=np.zeros(np.shape(y)), where=den > 0)

    return prox


def prox_conj_l21(radius, shift=None):
    """Prox of ``sigma * F^*`` for ``F(z) = radius * |z + shift|_{2,1}``."""
    if shift is None:
        return lambda y, sigma: proj_ball_21(y, radius)
    return lambda y, sigma: proj_ball_21(y + sigma * shift, radius)
