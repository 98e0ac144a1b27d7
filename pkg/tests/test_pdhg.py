import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import chambolle_tv_denoise, subgradient_tv_denoise
from wedgefill import regularizers as reg
from wedgefill.errors import SolverError
from wedgefill.solvers.pdhg import (DualBlock, PdhgProblem, pdhg_solve, power_norm,
                                    proj_ball_21, prox_conj_l21, prox_conj_weighted_l2)


def tv_denoise_problem(f, lam, **kw):
    def obj(x):
        return 0.5 * float(((x - f) ** 2).sum()) + lam * reg.tv(x)

    blocks = [DualBlock(reg.grad, lambda y: -reg.div(y), prox_conj_l21(lam), norm=math.sqrt(8.0))]
    return PdhgProblem(blocks, lambda x, t: (x + t * f) / (1 + t), obj, **kw)


def test_quadratic_alone_returns_data():
    b = np.random.default_rng(0).standard_normal((5, 6))
    ident = DualBlock(lambda x: x, lambda y: y, prox_conj_weighted_l2(1.0, b), norm=1.0)
    prob = PdhgProblem([ident], lambda x, t: x, lambda x: 0.5 * float(((x - b) ** 2).sum()),
                       max_iter=2000, tol=1e-14)
    res = pdhg_solve(prob, np.zeros_like(b))
    assert np.allclose(res.x, b, atol=1e-6)


def _noisy_8x8():
    rng = np.random.default_rng(0)
    f = np.zeros((8, 8))
    f[:, 4:] = 1.0
    f[2:5, 1:3] = 0.6
    return f + 0.1 * rng.standard_normal((8, 8))


def test_tv_denoising_matches_subgradient_oracle():
    f, lam = _noisy_8x8(), 0.15
    res = pdhg_solve(tv_denoise_problem(f, lam, max_iter=5000, tol=0.0), np.zeros_like(f))
    _, ref = subgradient_tv_denoise(f, lam)
    assert abs(res.objective - ref) <= 1e-5


def test_tv_denoising_matches_chambolle():
    f, lam = _noisy_8x8(), 0.15
    res = pdhg_solve(tv_denoise_problem(f, lam, max_iter=5000, tol=0.0), np.zeros_like(f))
    ref = chambolle_tv_denoise(f, lam)
    assert np.abs(res.x - ref).max() <= 1e-4


def test_one_dimensional_step_shrinks_by_two_lambda_over_width():
    w, h, lam = 10, 1.0, 0.5
    f = np.zeros((3, 2 * w))
    f[:, w:] = h
    # every row is the same 1D problem, so the 2D problem scales by the row count
    res = pdhg_solve(tv_denoise_problem(f, 3 * lam / 3, max_iter=20000, tol=0.0), np.zeros_like(f))
    jump = res.x[:, w:].mean() - res.x[:, :w].mean()
    assert jump == pytest.approx(h - 2 * lam / w, abs=1e-6)
    assert np.ptp(res.x[:, :w]) <= 1e-6 and np.ptp(res.x[:, w:]) <= 1e-6


def test_history_non_increasing_per_window():
    f, lam = _noisy_8x8(), 0.15
    res = pdhg_solve(tv_denoise_problem(f, lam, max_iter=2000, tol=0.0), np.zeros_like(f))
    assert np.all(np.diff(res.history) <= 1e-8 * abs(res.history[0]))


def test_reported_objective_never_above_start():
    f, lam = _noisy_8x8(), 0.15
    x0 = chambolle_tv_denoise(f, lam, iters=3000)
    prob = tv_denoise_problem(f, lam, max_iter=20, tol=0.0, strong_convexity=1.0)
    res = pdhg_solve(prob, x0)
    assert res.objective <= prob.objective(x0)


def test_iteration_cap_sets_warning():
    f, lam = _noisy_8x8(), 0.15
    res = pdhg_solve(tv_denoise_problem(f, lam, max_iter=10, tol=0.0), np.zeros_like(f))
    assert res.warning and res.iterations == 10


def test_converges_before_cap_with_tolerance():
    f, lam = _noisy_8x8(), 0.15
    res = pdhg_solve(tv_denoise_problem(f, lam, max_iter=5000, tol=1e-6), np.zeros_like(f))
    assert res.converged and not res.warning and res.iterations < 5000


def test_divergence_raises_with_diagnostics():
    f = np.ones((4, 4))
    # a wrong norm makes the steps far too large
    blk = DualBlock(lambda x: 50 * x, lambda y: 50 * y, prox_conj_weighted_l2(1.0, f), norm=1e-3)
    prob = PdhgProblem([blk], lambda x, t: x, lambda x: 0.5 * float(((50 * x - f) ** 2).sum()),
                       max_iter=200, tol=0.0)
    with pytest.raises(SolverError) as err:
        pdhg_solve(prob, np.zeros_like(f))
    assert "iteration" in err.value.diagnostics


def test_step_condition_with_power_norm():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((12, 7))
    est = power_norm(lambda x: M @ x, lambda y: M.T @ y, np.zeros(7), iters=20)
    true = np.linalg.norm(M, 2)
    assert est <= true * (1 + 1e-9) and est >= 0.9 * true


def test_diagonal_preconditioning_agrees():
    f, lam = _noisy_8x8(), 0.15
    import scipy.sparse as sp
    D0, D1 = reg.grad_matrix(f.shape)
    K = sp.vstack([D0, D1], format="csr")
    blocks = [DualBlock(reg.grad, lambda y: -reg.div(y), prox_conj_l21(lam), matrix=K,
                        coupled_components=True)]
    obj = tv_denoise_problem(f, lam).objective
    prob = PdhgProblem(blocks, lambda x, t: (x + t * f) / (1 + t), obj, max_iter=20000,
                       tol=0.0, precondition=True)
    res = pdhg_solve(prob, np.zeros_like(f))
    assert np.abs(res.x - chambolle_tv_denoise(f, lam)).max() <= 1e-4


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 10))
def test_ball_projection(seed, radius):
    y = 5 * np.random.default_rng(seed).standard_normal((2, 4, 4))
    p = proj_ball_21(y, radius)
    n = np.sqrt(p[0] ** 2 + p[1] ** 2)
    assert (n <= radius * (1 + 1e-12)).all()
    inside = np.sqrt(y[0] ** 2 + y[1] ** 2) <= radius
    assert np.array_equal(p[:, inside], y[:, inside])


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100))
def test_weighted_l2_conjugate_prox_moreau(seed, sigma):
    # Moreau: prox_{s F*}(y) = y - s prox_{F/s}(y/s)
    rng = np.random.default_rng(seed)
    w = rng.random(6) + 0.1
    t = rng.standard_normal(6)
    y = rng.standard_normal(6)
    z = y / sigma
    prox_primal = (w * t + z / (1 / sigma)) / (w + sigma) if False else (sigma * z + w * t) / (sigma + w)
    expected = y - sigma * prox_primal
    assert np.allclose(prox_conj_weighted_l2(w, t)(y, sigma), expected)
