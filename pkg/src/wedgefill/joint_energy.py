"""Joint reconstruction/inpainting energy and its convex + (semi-norm o smooth) split.

For an image ``u`` and a full sinogram ``v``::

    E(u, v) = 1/2 |Ru - v|^2_{alpha1}  +  alpha2/2 |S Ru - b|^2  +  alpha3/2 |S v - b|^2
              + beta1 TV(u)  +  beta2 |A_{Ru} grad v|_{2,1}

with ``alpha1`` a per-bin weight (``a1`` off the acquired region, 0 on it)
and ``A_d`` the anisotropy tensor built from the structure of ``d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Callable, NamedTuple

import numpy as np

from . import regularizers as reg
from .errors import ConfigurationError
from .tomo_core import Projector


@dataclass
class JointParams:
    """Model weights and outer-solver controls.

    ``alpha1`` is either the scalar applied on the unacquired region (binary
    weight) or a full per-bin weight array.
    """

    alpha1: float | np.ndarray = 0.25
    alpha2: float = 1.0
    alpha3: float = 0.1
    beta1: float = 3e-5
    beta2: float = 3e3
    beta3: float = 1e10
    rho: float = 1.0
    sigma: float = 8.0
    eps: float = reg.EPS_C
    tau_x: float = 1.0
    tau_y: float = 1e-3
    iters: int = 200

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.rho <= 0:
            raise ConfigurationError("rho must be > 0")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        for name in ("alpha2", "alpha3", "beta1", "beta2", "beta3", "tau_x", "tau_y", "eps"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if np.any(np.asarray(self.alpha1) < 0):
            raise ConfigurationError("alpha1 must be >= 0")
        if int(self.iters) < 0:
            raise ConfigurationError("iters must be >= 0")

    def replace(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


TERM_NAMES = ("pair", "data_u", "data_v", "tv_u", "dtv_v")


class EnergyTerms(NamedTuple):
    pair: float
    data_u: float
    data_v: float
    tv_u: float
    dtv_v: float
    total: float
    min_u: float

    @property
    def feasible(self):
        """Whether ``u >= 0`` holds; the energy itself ignores the constraint."""
        return self.min_u >= 0


def pairing_weight(alpha1, mask):
    """Per-bin weight of the ``|Ru - v|^2`` term."""
    mask = np.asarray(mask, dtype=bool)
    a = np.asarray(alpha1, dtype=float)
    if a.ndim == 0:
        return np.where(mask, 0.0, float(a))
    if a.shape != mask.shape:
        raise ConfigurationError("alpha1 array must match the sinogram shape")
    return a


@dataclass
class JointProblem:
    """Data, sampling pattern, projector and weights of one joint solve."""

    projector: Projector
    b: np.ndarray
    mask: np.ndarray
    params: JointParams
    weight: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        shape = self.projector.sinogram_shape
        if self.b.shape != shape or self.mask.shape != shape:
            raise ConfigurationError(f"data/mask shape must be {shape}")
        if not self.mask.any():
            raise ConfigurationError("mask has no acquired entries")
        self.params.validate()
        # b is extended by zero off the acquired region
        self.b = np.where(self.mask, self.b, 0.0)
        self.weight = pairing_weight(self.params.alpha1, self.mask)

    def with_params(self, **changes):
        return JointProblem(self.projector, self.b, self.mask, self.params.replace(**changes))

    def anisotropy(self, d):
        p = self.params
        return reg.anisotropy_tensor(d, p.rho, p.sigma, p.beta3, p.eps)

    def energy(self, u, v, Ru=None):
        p = self.params
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if v.shape != self.b.shape:
            raise ConfigurationError("v must have the sinogram shape")
        Ru = self.projector.forward(u) if Ru is None else Ru
        m = self.mask
        pair = 0.5 * float((self.weight * (Ru - v) ** 2).sum())
        data_u = 0.5 * p.alpha2 * float((np.where(m, Ru - self.b, 0.0) ** 2).sum())
        data_v = 0.5 * p.alpha3 * float((np.where(m, v - self.b, 0.0) ** 2).sum())
        tv_u = p.beta1 * reg.tv(u) if p.beta1 else 0.0
        dtv_v = p.beta2 * reg.dtv(v, self.anisotropy(Ru)) if p.beta2 else 0.0
        total = pair + data_u + data_v + tv_u + dtv_v
        return EnergyTerms(pair, data_u, data_v, tv_u, dtv_v, total, float(u.min()))


def energy(u, v, b, mask, p, projector):
    """Term-wise joint energy; see :class:`EnergyTerms`."""
    return JointProblem(projector, b, mask, p).energy(u, v)


class Split(NamedTuple):
    f: Callable
    g: Callable
    J: Callable


def split_fgJ(problem):
    """Return ``(f, g, J)`` with ``E(x, y) = f(x, y) + g(J(x, y))``.

    ``f`` includes the non-negativity indicator (``inf`` when ``x`` has a
    negative entry); ``g`` is ``beta2`` times the (2,1)-norm.
    """
    p = problem.params

    def f(x, y):
        if np.min(x) < 0:
            return np.inf
        t = problem.energy(x, y) if p.beta2 == 0 else \
            problem.with_params(beta2=0.0).energy(x, y)
        return t.total

    def g(z):
        return p.beta2 * float(reg.pointwise_norm(z).sum())

    def J(x, y):
        return reg.apply_tensor(problem.anisotropy(problem.projector.forward(x)), reg.grad(y))

    return Split(f, g, J)


def linearize_J_in_x(problem, x, y, dx):
    """``(d/dt) A_{R(x + t dx)} grad y`` at ``t = 0``."""
    p = problem.params
    R = problem.projector
    lin = reg.AnisotropyLinearization(R.forward(x), p.rho, p.sigma, p.beta3, p.eps)
    return reg.apply_tensor(lin.jvp(R.forward(dx)), reg.grad(y))


def linearize_J_in_y(problem, x, y, dy):
    """``A_{Rx} grad dy``; ``J`` is linear in ``y`` so this is exact."""
    return reg.apply_tensor(problem.anisotropy(problem.projector.forward(x)), reg.grad(dy))
