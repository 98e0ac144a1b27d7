"""Discrete gradients, TV, structure tensors and directional TV.

Vector fields are arrays of shape ``(2, H, W)``; component ``k`` is the
forward difference along array axis ``k``.  Symmetric 2x2 tensor fields are
stored as :class:`TensorField` planes ``(m11, m12, m22)`` in the same
component order.
"""
from __future__ import annotations

import functools
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

EPS_C = 1e-6


class TensorField(NamedTuple):
    m11: np.ndarray
    m12: np.ndarray
    m22: np.ndarray

    def stack(self):
        return np.stack([self.m11, self.m12, self.m22])

    @classmethod
    def from_stack(cls, planes):
        planes = np.asarray(planes, dtype=float)
        return cls(planes[0], planes[1], planes[2])

    @classmethod
    def isotropic(cls, c, shape):
        c = np.broadcast_to(np.asarray(c, dtype=float), shape)
        return cls(c.copy(), np.zeros(shape), c.copy())


class EigenField(NamedTuple):
    lam1: np.ndarray
    lam2: np.ndarray
    e1: np.ndarray  # (2, H, W)
    e2: np.ndarray

    @property
    def coherence(self):
        return self.lam1 - self.lam2

    @property
    def energy(self):
        return self.lam1 + self.lam2


# -- gradients ---------------------------------------------------------------

def grad(f):
    """Forward differences with Neumann boundary, shape ``(2, H, W)``."""
    f = np.asarray(f, dtype=float)
    g = np.zeros((2,) + f.shape)
    g[0, :-1, :] = f[1:, :] - f[:-1, :]
    g[1, :, :-1] = f[:, 1:] - f[:, :-1]
    return g


def div(g):
    """Negative adjoint of :func:`grad`: ``<grad f, g> = -<f, div g>``."""
    g = np.asarray(g, dtype=float)
    d = np.zeros(g.shape[1:])
    d[:-1, :] += g[0, :-1, :]
    d[1:, :] -= g[0, :-1, :]
    d[:, :-1] += g[1, :, :-1]
    d[:, 1:] -= g[1, :, :-1]
    return d


@functools.lru_cache(maxsize=16)
def _diff_matrix(n):
    # forward difference with a zero last row (Neumann)
    d = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format="lil")
    d[n - 1, n - 1] = 0.0
    return d.tocsr()


def grad_matrix(shape):
    """Sparse matrix of :func:`grad` acting on ``f.ravel()``."""
    H, W = shape
    D0 = sp.kron(_diff_matrix(H), sp.identity(W), format="csr")
    D1 = sp.kron(sp.identity(H), _diff_matrix(W), format="csr")
    return D0, D1


def dtv_matrix(A):
    """Sparse matrix of ``v -> A grad v`` (output stacked as ``(2, H, W)``)."""
    D0, D1 = grad_matrix(A.m11.shape)
    a11, a12, a22 = (sp.diags(np.ravel(a)) for a in A)
    return sp.vstack([a11 @ D0 + a12 @ D1, a12 @ D0 + a22 @ D1], format="csr")


def pointwise_norm(g):
    return np.sqrt(g[0] ** 2 + g[1] ** 2)


def tv(f):
    """Isotropic total variation ``sum |grad f|``."""
    return float(pointwise_norm(grad(f)).sum())


# -- Gaussian blur -----------------------------------------------------------

def gaussian_kernel(sigma):
    """Sampled Gaussian truncated at 4 sigma, normalised to unit sum."""
    if sigma < 0:
        raise ConfigurationError("blur radius must be >= 0")
    if sigma == 0:
        return np.ones(1)
    radius = int(4.0 * sigma + 0.5)
    k = np.arange(-radius, radius + 1)
    w = np.exp(-0.5 * (k / sigma) ** 2)
    return w / w.sum()


@functools.lru_cache(maxsize=64)
def _blur_matrix(n, sigma):
    # dense (n, n) matrix of a 1D replicate-padded convolution
    w = gaussian_kernel(sigma)
    r = w.size // 2
    B = np.zeros((n, n))
    rows = np.arange(n)
    for k, wk in zip(range(-r, r + 1), w):
        np.add.at(B, (rows, np.clip(rows + k, 0, n - 1)), wk)
    B.setflags(write=False)
    return B


def gaussian_blur(f, sigma):
    """Separable Gaussian blur with replicate padding; ``sigma=0`` is the identity."""
    f = np.asarray(f, dtype=float)
    if sigma == 0:
        return f.copy()
    B0 = _blur_matrix(f.shape[0], float(sigma))
    B1 = _blur_matrix(f.shape[1], float(sigma))
    return B0 @ f @ B1.T


def gaussian_blur_adjoint(f, sigma):
    """Exact adjoint of :func:`gaussian_blur` (padding makes it non-symmetric)."""
    f = np.asarray(f, dtype=float)
    if sigma == 0:
        return f.copy()
    B0 = _blur_matrix(f.shape[0], float(sigma))
    B1 = _blur_matrix(f.shape[1], float(sigma))
    return B0.T @ f @ B1


# -- structure tensor and eigen-decomposition --------------------------------

def structure_tensor(d, rho, sigma):
    """``blur_sigma(grad(d_rho) grad(d_rho)^T)`` with ``d_rho = blur_rho(d)``."""
    if rho <= 0:
        raise ConfigurationError("rho must be > 0")
    if sigma < 0:
        raise ConfigurationError("sigma must be >= 0")
    g = grad(gaussian_blur(d, rho))
    return TensorField(gaussian_blur(g[0] * g[0], sigma),
                       gaussian_blur(g[0] * g[1], sigma),
                       gaussian_blur(g[1] * g[1], sigma))


def eig2x2(M):
    """Closed-form ordered eigen-decomposition of a symmetric 2x2 field.

    Of the two algebraically equal expressions for ``e1`` the one with the
    larger denominator is used, so neither degenerates to 0/0.  Where the
    eigenvalues coincide, ``e1=(1, 0)`` and ``e2=(0, 1)``.
    """
    m11, m12, m22 = (np.asarray(m, dtype=float) for m in M)
    diff = m11 - m22
    delta = np.sqrt(diff ** 2 + 4.0 * m12 ** 2)
    total = m11 + m22

    # (2 m12, delta - diff) and (delta + diff, 2 m12)
    use_b = diff >= 0
    ax = np.where(use_b, delta + diff, 2.0 * m12)
    ay = np.where(use_b, 2.0 * m12, delta - diff)
    nrm = np.hypot(ax, ay)
    degenerate = nrm <= 1e-300
    safe = np.where(degenerate, 1.0, nrm)
    e1 = np.stack([np.where(degenerate, 1.0, ax / safe), np.where(degenerate, 0.0, ay / safe)])
    e2 = np.stack([-e1[1], e1[0]])
    return EigenField(0.5 * (total + delta), 0.5 * (total - delta), e1, e2)


def diffusivities(coherence, energy, beta3, eps=EPS_C):
    """``(c1, c2)`` as functions of coherence squared and energy."""
    t = np.tanh(energy)
    c2 = eps + t
    c1 = eps + t / (1.0 + beta3 * coherence ** 2)
    return c1, c2


def tensor_from_eigen(eig, c1, c2):
    e1, e2 = eig.e1, eig.e2
    return TensorField(c1 * e1[0] ** 2 + c2 * e2[0] ** 2,
                       c1 * e1[0] * e1[1] + c2 * e2[0] * e2[1],
                       c1 * e1[1] ** 2 + c2 * e2[1] ** 2)


def anisotropy_from_structure(M, beta3, eps=EPS_C):
    eig = eig2x2(M)
    c1, c2 = diffusivities(eig.coherence, eig.energy, beta3, eps)
    return tensor_from_eigen(eig, c1, c2)


def anisotropy_tensor(d, rho, sigma, beta3, eps=EPS_C):
    """Directional weight ``A_d = c1 e1 e1^T + c2 e2 e2^T`` of the field ``d``."""
    if rho <= 0:
        raise ConfigurationError("rho must be > 0")
    return anisotropy_from_structure(structure_tensor(d, rho, sigma), beta3, eps)


def apply_tensor(A, g):
    """Pointwise product ``A(x) g(x)`` for a vector field ``g``."""
    return np.stack([A.m11 * g[0] + A.m12 * g[1], A.m12 * g[0] + A.m22 * g[1]])


def apply_tensor_adjoint_w(z, w):
    """Cotangent planes of ``A -> A w`` paired with ``z``."""
    return TensorField(z[0] * w[0], z[0] * w[1] + z[1] * w[0], z[1] * w[1])


def dtv(v, A):
    """Directional TV ``sum |A grad v|``."""
    return float(pointwise_norm(apply_tensor(A, grad(v))).sum())


# -- derivative of d -> A_d --------------------------------------------------

class AnisotropyLinearization:
    """``A_d`` and its derivative in ``d`` at a fixed field ``d``.

    The tensor is rewritten without eigenvectors as
    ``A = h I + k N`` where ``N = M - tr(M)/2 I`` is the trace-free part of the
    structure tensor, ``h = (c1 + c2)/2`` and ``k = (c1 - c2)/Delta``.  Both
    ``h`` is smooth in ``(Delta^2, Sigma)`` and ``k N`` is continuously
    differentiable through ``Delta = 0``, so the chain rule holds across
    eigenvalue crossings where the eigenvectors themselves jump.
    """

    def __init__(self, d, rho, sigma, beta3, eps=EPS_C):
        if rho <= 0:
            raise ConfigurationError("rho must be > 0")
        self.rho, self.sigma, self.beta3, self.eps = float(rho), float(sigma), float(beta3), float(eps)
        d = np.asarray(d, dtype=float)
        self.shape = d.shape
        self.g = grad(gaussian_blur(d, self.rho))
        g = self.g
        M = TensorField(gaussian_blur(g[0] * g[0], self.sigma),
                        gaussian_blur(g[0] * g[1], self.sigma),
                        gaussian_blur(g[1] * g[1], self.sigma))
        self.M = M
        self._coefficients(M)

    def _coefficients(self, M):
        b3 = self.beta3
        Sig = M.m11 + M.m22
        N11 = 0.5 * (M.m11 - M.m22)
        N12 = M.m12
        q = 4.0 * (N11 ** 2 + N12 ** 2)
        Dl = np.sqrt(q)
        a = np.tanh(Sig)
        s = 1.0 / (1.0 + b3 * q)
        h = self.eps + 0.5 * a * (1.0 + s)
        k = -b3 * a * Dl * s
        self.h, self.k, self.N11, self.N12 = h, k, N11, N12

        # partials w.r.t. (M11, M12, M22), each a (3, H, W) stack
        zero = np.zeros_like(Sig)
        one = np.ones_like(Sig)
        dSig = np.stack([one, zero, one])
        dN11 = np.stack([0.5 * one, zero, -0.5 * one])
        dN12 = np.stack([zero, one, zero])
        dq = 8.0 * (N11 * dN11 + N12 * dN12)
        nz = Dl > 1e-300
        inv2D = np.where(nz, 0.5 / np.where(nz, Dl, 1.0), 0.0)
        dDl = dq * inv2D
        da = (1.0 - a ** 2) * dSig
        ds = -b3 * s ** 2 * dq
        dh = 0.5 * da * (1.0 + s) + 0.5 * a * ds
        dk = -b3 * (da * Dl * s + a * dDl * s + a * Dl * ds)
        self._dA11 = dh + dk * N11 + k * dN11
        self._dA22 = dh - dk * N11 - k * dN11
        self._dA12 = dk * N12 + k * dN12

    def tensor(self):
        return TensorField(self.h + self.k * self.N11, self.k * self.N12, self.h - self.k * self.N11)

    def _dM(self, dd):
        g = self.g
        dg = grad(gaussian_blur(dd, self.rho))
        return np.stack([gaussian_blur(2.0 * g[0] * dg[0], self.sigma),
                         gaussian_blur(g[0] * dg[1] + g[1] * dg[0], self.sigma),
                         gaussian_blur(2.0 * g[1] * dg[1], self.sigma)])

    def jvp(self, dd):
        """Directional derivative of ``A`` along ``dd``."""
        dM = self._dM(np.asarray(dd, dtype=float))
        return TensorField((self._dA11 * dM).sum(0), (self._dA12 * dM).sum(0), (self._dA22 * dM).sum(0))

    def vjp(self, cot):
        """Adjoint of :meth:`jvp` for plane-wise cotangents ``(c11, c12, c22)``."""
        c11, c12, c22 = cot
        gam = self._dA11 * c11 + self._dA12 * c12 + self._dA22 * c22
        gam = np.stack([gaussian_blur_adjoint(p, self.sigma) for p in gam])
        g = self.g
        dg = np.stack([2.0 * g[0] * gam[0] + g[1] * gam[1],
                       g[0] * gam[1] + 2.0 * g[1] * gam[2]])
        return gaussian_blur_adjoint(-div(dg), self.rho)


def danisotropy_dd(d, dd, rho, sigma, beta3, eps=EPS_C):
    """Directional derivative of ``d -> A_d`` in direction ``dd``."""
    return AnisotropyLinearization(d, rho, sigma, beta3, eps).jvp(dd)


def tensor_distance(A, B):
    """Largest pointwise Frobenius distance between two tensor fields."""
    return float(np.sqrt((A.m11 - B.m11) ** 2 + 2 * (A.m12 - B.m12) ** 2 + (A.m22 - B.m22) ** 2).max())

