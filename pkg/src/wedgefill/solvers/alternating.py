"""Alternating linearised proximal descent for the joint energy.

Each outer iteration solves two convex problems with PDHG:

* x-step: the coupling ``J(x, v_n)`` is replaced by its first-order
  expansion around ``u_n`` and a proximity term ``tau_x |x - u_n|^2`` is added;
* y-step: ``J`` is linear in ``v`` so the subproblem is an exact weighted
  directional-TV denoising/inpainting problem with proximity ``tau_y``.

Sufficient decrease ``E_new <= E_old - (tau/2) |step|^2`` is checked after
every half step; on failure ``tau`` is doubled and the step redone.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .. import regularizers as reg
from ..errors import SolverError
from ..io import write_binary
from ..joint_energy import TERM_NAMES, EnergyTerms, JointProblem
from .pdhg import DualBlock, PdhgProblem, pdhg_solve, prox_conj_l21, prox_conj_weighted_l2

log = logging.getLogger(__name__)


@dataclass
class InnerOptions:
    """PDHG budget shared by both subproblems."""

    max_iter: int = 200
    tol: float = 1e-6
    ratio_x: float = 0.5
    ratio_y: float = 0.001


@dataclass
class StepResult:
    x: np.ndarray
    sub_old: float
    sub_new: float
    iterations: int
    converged: bool
    duals: list


def _sq(a):
    return float(np.vdot(a, a))


# -- x-step --------------------------------------------------------------------

def x_step(problem: JointProblem, u, v, tau_x=None, inner=None, duals=None):
    """One linearised proximal step in ``u`` with ``u >= 0``.

    Minimises ``f(x, v) + tau_x |x - u|^2 + beta2 |J(u, v) + D_xJ(u, v)(x - u)|_{2,1}``.
    The returned iterate never has a larger subproblem objective than ``u``.
    """
    p = problem.params
    inner = inner or InnerOptions()
    tau_x = p.tau_x if tau_x is None else float(tau_x)
    R = problem.projector
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u_start = np.maximum(u, 0.0)
    m = problem.mask
    W = problem.weight + p.alpha2 * m
    num = problem.weight * v + p.alpha2 * np.where(m, problem.b, 0.0)
    T = np.divide(num, W, out=np.zeros_like(W), where=W > 0)
    const_v = 0.5 * p.alpha3 * _sq(np.where(m, v - problem.b, 0.0))

    blocks = [DualBlock(R.forward, R.adjoint, prox_conj_weighted_l2(W, T),
                        norm=R.operator_norm, name="data")]
    if p.beta1 > 0:
        blocks.append(DualBlock(reg.grad, lambda y: -reg.div(y),
                                prox_conj_l21(p.beta1), norm=math.sqrt(8.0), name="tv"))
    lin_terms = None
    fused = {}
    if p.beta2 > 0:
        lin = reg.AnisotropyLinearization(R.forward(u), p.rho, p.sigma, p.beta3, p.eps)
        w = reg.grad(v)
        A_n = lin.tensor()

        def L(x):
            return reg.apply_tensor(lin.jvp(R.forward(x)), w)

        def Lt(z):
            return R.adjoint(lin.vjp(reg.apply_tensor_adjoint_w(z, w)))

        c = reg.apply_tensor(A_n, w) - L(u)
        blocks.append(DualBlock(L, Lt, prox_conj_l21(p.beta2, c), name="coupling"))
        lin_terms = (L, c)

        # one projection and one back-projection per iteration for both R-blocks
        def forward_all(x):
            r = R.forward(x)
            out = [r, reg.grad(x)] if p.beta1 > 0 else [r]
            out.append(reg.apply_tensor(lin.jvp(r), w))
            return out

        def adjoint_all(ys):
            back = R.adjoint(ys[0] + lin.vjp(reg.apply_tensor_adjoint_w(ys[-1], w)))
            return back - reg.div(ys[1]) if p.beta1 > 0 else back

        fused = dict(forward_all=forward_all, adjoint_all=adjoint_all)

    def objective(x):
        r = R.forward(x)
        val = 0.5 * float((problem.weight * (r - v) ** 2).sum())
        val += 0.5 * p.alpha2 * _sq(np.where(m, r - problem.b, 0.0)) + const_v
        if p.beta1 > 0:
            val += p.beta1 * reg.tv(x)
        val += tau_x * _sq(x - u)
        if lin_terms is not None:
            Lf, c = lin_terms
            val += p.beta2 * float(reg.pointwise_norm(c + Lf(x)).sum())
        return val

    def prox(xt, t):
        return np.maximum((xt + 2.0 * t * tau_x * u) / (1.0 + 2.0 * t * tau_x), 0.0)

    prob = PdhgProblem(blocks, prox, objective, max_iter=inner.max_iter, tol=inner.tol,
                       ratio=inner.ratio_x, strong_convexity=2.0 * tau_x, **fused)
    if duals is not None and len(duals) != len(blocks):
        duals = None
    sub_old = objective(u_start)
    res = pdhg_solve(prob, u_start, duals)
    x = res.x
    if res.objective > sub_old:
        x = u_start
    return StepResult(x, sub_old, min(res.objective, sub_old), res.iterations, res.converged, res.duals)


# -- y-step --------------------------------------------------------------------

def solve_weighted_dtv(weight, target, A, beta, x0=None, inner=None, duals=None, ratio=None):
    """Minimise ``1/2 sum weight (v - target)^2 + beta |A grad v|_{2,1}``.

    Entries with zero weight are filled in by the regulariser alone.  With
    ``beta == 0`` the minimiser is ``target`` wherever ``weight > 0`` and
    ``x0`` elsewhere.
    """
    inner = inner or InnerOptions()
    weight = np.asarray(weight, dtype=float)
    target = np.asarray(target, dtype=float)
    x0 = np.zeros_like(target) if x0 is None else np.asarray(x0, dtype=float)
    if beta <= 0:
        return StepResult(np.where(weight > 0, target, x0), math.nan, math.nan, 0, True, [])

    def op(x):
        return reg.apply_tensor(A, reg.grad(x))

    def adj(z):
        return -reg.div(reg.apply_tensor(A, z))

    def objective(x):
        return 0.5 * float((weight * (x - target) ** 2).sum()) + beta * float(
            reg.pointwise_norm(op(x)).sum())

    def prox(xt, t):
        return (xt + t * weight * target) / (1.0 + t * weight)

    K = reg.dtv_matrix(A)
    shape2 = (2,) + target.shape
    blocks = [DualBlock(lambda x: (K @ x.ravel()).reshape(shape2),
                        lambda z: (K.T @ z.ravel()).reshape(target.shape),
                        prox_conj_l21(beta), name="dtv", matrix=K, coupled_components=True)]
    prob = PdhgProblem(blocks, prox, objective, max_iter=inner.max_iter, tol=inner.tol,
                       ratio=inner.ratio_y if ratio is None else ratio, precondition=True)
    sub_old = objective(x0)
    res = pdhg_solve(prob, x0, duals)
    x = res.x if res.objective <= sub_old else x0
    return StepResult(x, sub_old, min(res.objective, sub_old), res.iterations, res.converged, res.duals)


def y_step(problem: JointProblem, u, v, tau_y=None, inner=None, duals=None, A=None):
    """Exact proximal step in ``v`` for fixed ``u``.

    ``A`` overrides the anisotropy tensor (otherwise built from ``R u``).
    """
    p = problem.params
    tau_y = p.tau_y if tau_y is None else float(tau_y)
    R = problem.projector
    r = R.forward(u)
    m = problem.mask
    bm = np.where(m, problem.b, 0.0)
    W = problem.weight + p.alpha3 * m + 2.0 * tau_y
    num = problem.weight * r + p.alpha3 * bm + 2.0 * tau_y * v
    T = np.divide(num, W, out=np.zeros_like(W), where=W > 0)
    if A is None and p.beta2 > 0:
        A = problem.anisotropy(r)
    res = solve_weighted_dtv(W, T, A, p.beta2, x0=v, inner=inner, duals=duals)
    return res


# -- outer loop ------------------------------------------------------------------

@dataclass
class JointOptions:
    """Outer-loop controls beyond :class:`JointParams`."""

    inner: InnerOptions = field(default_factory=InnerOptions)
    slack: float = 1e-8
    max_backtracks: int = 30
    relax_after: int = 5
    checkpoint_dir: Optional[str] = None
    checkpoint_every: int = 0
    callback: Optional[Callable] = None


@dataclass
class JointState:
    u: np.ndarray
    v: np.ndarray
    energy_trace: list
    iteration: int = 0
    tau_x: float = 0.0
    tau_y: float = 0.0
    records: list = field(default_factory=list)

    @property
    def totals(self):
        return np.array([e.total for e in self.energy_trace])

    def step_sums(self):
        """``(sum |du|^2 + |dv|^2, sum tau_X |du|^2 + tau_Y |dv|^2, min tau)``."""
        if not self.records:
            return 0.0, 0.0, math.inf
        plain = sum(r["du2"] + r["dv2"] for r in self.records)
        weighted = sum(r["tauX"] * r["du2"] + r["tauY"] * r["dv2"] for r in self.records)
        taus = [r["tauX"] for r in self.records] + [r["tauY"] for r in self.records]
        return plain, weighted, min(taus)

    def write_trace(self, path):
        write_trace_csv(path, self)


TRACE_COLUMNS = ("iteration",) + TERM_NAMES + (
    "total", "du_norm", "dv_norm", "tau_x", "tau_y", "inner_x", "inner_y", "backtracks")


def write_trace_csv(path, state):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRACE_COLUMNS)
        e0 = state.energy_trace[0]
        wr.writerow([0, *(repr(getattr(e0, k)) for k in TERM_NAMES), repr(e0.total),
                     0.0, 0.0, state.records[0]["tau_x"] if state.records else state.tau_x,
                     state.records[0]["tau_y"] if state.records else state.tau_y, 0, 0, 0])
        for n, (e, r) in enumerate(zip(state.energy_trace[1:], state.records), start=1):
            wr.writerow([n, *(repr(getattr(e, k)) for k in TERM_NAMES), repr(e.total),
                         repr(math.sqrt(r["du2"])), repr(math.sqrt(r["dv2"])),
                         repr(r["tau_x"]), repr(r["tau_y"]), r["inner_x"], r["inner_y"],
                         r["backtracks"]])


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in TRACE_COLUMNS}


class _TauController:
    """Doubling on failed sufficient decrease, halving back after a calm streak."""

    def __init__(self, tau0, relax_after):
        self.tau0 = float(tau0)
        self.tau = float(tau0)
        self.relax_after = relax_after
        self.calm = 0

    def fail(self):
        self.tau = 2.0 * self.tau if self.tau > 0 else 1e-6
        self.calm = 0

    def success(self, comfortable):
        self.calm = self.calm + 1 if comfortable else 0
        if self.calm >= self.relax_after and self.tau > self.tau0:
            self.tau = max(self.tau0, 0.5 * self.tau)
            self.calm = 0


def _half_step(step_fn, energy_fn, old, E_old, ctrl, slack, max_bt, label, n):
    """Run ``step_fn(tau)`` until sufficient decrease holds; returns the accepted step."""
    backtracks = 0
    while True:
        tau = ctrl.tau
        res = step_fn(tau)
        E_new = energy_fn(res.x)
        d2 = _sq(res.x - old)
        bound = E_old.total - 0.5 * tau * d2 + slack
        if E_new.total <= bound:
            ctrl.success(bound - E_new.total > 10.0 * slack)
            return res, E_new, d2, tau, backtracks
        backtracks += 1
        log.debug("iteration %d: %s-step failed sufficient decrease (%.6g > %.6g), tau=%.3g",
                  n, label, E_new.total, bound, tau)
        if backtracks > max_bt:
            raise SolverError(
                f"{label}-step: sufficient decrease still violated after {max_bt} doublings",
                diagnostics={"iteration": n, "tau": tau, "energy_old": E_old.total,
                             "energy_new": E_new.total, "step_sq": d2})
        ctrl.fail()


def _checkpoint(opts, n, u, v):
    if opts.checkpoint_dir and opts.checkpoint_every and n % opts.checkpoint_every == 0:
        d = Path(opts.checkpoint_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_binary(d / f"u_{n:04d}.bin", u)
        write_binary(d / f"v_{n:04d}.bin", v)


def _same_inputs(a, b):
    if a[0] != b[0] or a[1] != b[1]:
        return False
    for da, db in zip(a[2:], b[2:]):
        if (da is None) != (db is None):
            return False
        if da is not None and (len(da) != len(db)
                               or not all(np.array_equal(x, y) for x, y in zip(da, db))):
            return False
    return True


def run_joint(u0, v0, problem: JointProblem, options: Optional[JointOptions] = None):
    """Alternate x- and y-steps for ``problem.params.iters`` iterations.

    Every accepted half step satisfies ``E_new <= E_old - (tau/2)|step|^2``
    up to ``slack * |E_0| / 2``, so the total energy is monotone and the
    weighted step lengths are summable.
    """
    opts = options or JointOptions()
    p = problem.params
    u = np.maximum(np.asarray(u0, dtype=float), 0.0)
    v = np.array(v0, dtype=float)
    E = problem.energy(u, v)
    state = JointState(u, v, [E], 0, p.tau_x, p.tau_y)
    if p.iters == 0:
        state.u, state.v = np.array(u0, dtype=float), np.array(v0, dtype=float)
        return state
    half_slack = 0.5 * opts.slack * abs(E.total)
    cx = _TauController(p.tau_x, opts.relax_after)
    cy = _TauController(p.tau_y, opts.relax_after)
    dual_x = dual_y = None
    E0 = E.total
    n = 0
    while n < int(p.iters):
        n += 1
        prev = (cx.tau, cy.tau, dual_x, dual_y)
        rx, Ex, du2, tx, btx = _half_step(
            lambda t: x_step(problem, u, v, t, opts.inner, dual_x),
            lambda x: problem.energy(x, v), u, E, cx, half_slack, opts.max_backtracks, "x", n)
        u_new = rx.x
        dual_x = rx.duals
        ry, Ey, dv2, ty, bty = _half_step(
            lambda t: y_step(problem, u_new, v, t, opts.inner, dual_y),
            lambda y: problem.energy(u_new, y), v, Ex, cy, half_slack, opts.max_backtracks, "y", n)
        dual_y = ry.duals or None
        if Ey.total > E.total + opts.slack * abs(E0):
            raise SolverError("energy increased", diagnostics={"iteration": n})
        u, v, E = u_new, ry.x, Ey
        state.energy_trace.append(E)
        state.records.append({"du2": du2, "dv2": dv2, "tau_x": tx, "tau_y": ty,
                              "tauX": 0.5 * tx, "tauY": 0.5 * ty,
                              "inner_x": rx.iterations, "inner_y": ry.iterations,
                              "backtracks": btx + bty})
        state.u, state.v, state.iteration = u, v, n
        state.tau_x, state.tau_y = cx.tau, cy.tau
        _checkpoint(opts, n, u, v)
        if opts.callback is not None:
            opts.callback(state)
        log.info("iteration %d: E=%.8g |du|=%.3g |dv|=%.3g tau_x=%.3g tau_y=%.3g",
                 n, E.total, math.sqrt(du2), math.sqrt(dv2), tx, ty)
        if du2 == 0.0 and dv2 == 0.0 and _same_inputs(prev, (cx.tau, cy.tau, dual_x, dual_y)):
            # the iteration map is deterministic, so every later iteration repeats this one
            log.info("iteration %d: fixed point of the iteration map, repeating it", n)
            while n < int(p.iters):
                n += 1
                state.energy_trace.append(E)
                state.records.append(dict(state.records[-1]))
                _checkpoint(opts, n, u, v)
            state.iteration = n
            break

    plain, weighted, tmin = state.step_sums()
    if weighted > E0 + opts.slack * abs(E0) * p.iters:
        raise SolverError("weighted step sum exceeds the initial energy",
                          diagnostics={"weighted": weighted, "E0": E0})
    return state
