import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wedgefill.solvers import criticality, toy


# -- slope -----------------------------------------------------------------------

@pytest.mark.parametrize("dim", [1, 2, 16])
def test_slope_of_negative_norm_at_zero(dim):
    assert criticality.slope(lambda x: -np.linalg.norm(x), np.zeros(dim)) == pytest.approx(1.0, abs=0.01)


def test_slope_of_squared_norm_at_zero():
    assert criticality.slope(lambda x: float(np.dot(x, x)), np.zeros(16)) <= 1e-3


def test_slope_of_norm_at_zero_is_clamped():
    assert criticality.slope(lambda x: np.linalg.norm(x), np.zeros(16)) == 0.0


def test_slope_of_constant_is_zero():
    assert criticality.slope(lambda x: 3.0, np.ones(4)) == 0.0


def test_slope_accepts_image_shaped_points():
    s = criticality.slope(lambda x: -np.abs(x).sum(), np.zeros((3, 3)), n_dirs=16)
    # the axes alone give 1; the best direction (all signs equal) gives sqrt(9)
    assert 1.0 <= s <= 3.0 + 1e-9


def test_joint_slope_of_toy_at_origin():
    # steepest descent is along (-1,-1)/sqrt(2) with rate 1/sqrt(2)
    s = criticality.slope(lambda p: toy.toy_energy(p[0], p[1]), np.zeros(2))
    assert 0.69 <= s <= 1 / math.sqrt(2) + 1e-3


def test_axis_slopes_of_toy_at_origin_vanish():
    assert criticality.slope(lambda p: toy.toy_energy(p[0], 0.0), np.zeros(1)) == 0.0
    assert criticality.slope(lambda p: toy.toy_energy(0.0, p[0]), np.zeros(1)) == 0.0


def test_direction_sampling():
    d = criticality.sample_directions(5, 8, seed=3)
    assert d.shape == (8 + 10, 5)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.array_equal(d, criticality.sample_directions(5, 8, seed=3))
    assert criticality.sample_directions(300, 4).shape == (4, 300)


# -- toy iteration -----------------------------------------------------------------

def test_origin_never_moves():
    s = toy.run_toy_2axis(0.0, 0.0, 1.0, 1.0, 1000)
    assert all(p == (0.0, 0.0) for p in s.trace)
    assert len(s.trace) == 1001


def test_from_minus_one_reaches_diagonal_half():
    s = toy.run_toy_2axis(-1.0, -1.0, 1.0, 1.0, 200)
    assert abs(s.x + 0.5) <= 1e-6 and abs(s.y + 0.5) <= 1e-6
    e = s.energies
    assert all(b <= a for a, b in zip(e, e[1:]))


def test_limits_are_axis_critical_only():
    assert toy.is_axis_critical(0.0, 0.0)
    assert toy.is_axis_critical(-0.5, -0.5)
    assert not toy.is_critical(0.0, 0.0)
    assert not toy.is_critical(-0.5, -0.5)


def test_joint_minimiser_is_the_critical_point():
    x, y = toy.JOINT_MINIMISER
    assert toy.is_critical(x, y)
    grid = np.linspace(-1, 1, 201)
    vals = [toy.toy_energy(a, b) for a in grid for b in grid]
    assert toy.toy_energy(x, y) <= min(vals) + 1e-12


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 10))
def test_prox_step_is_the_exact_minimiser(a, c, tau):
    t = toy.prox_step(a, c, tau)
    obj = lambda s: max(s, c) + s * s + tau * (s - a) ** 2
    grid = np.linspace(t - 1, t + 1, 2001)
    assert obj(t) <= min(obj(s) for s in grid) + 1e-12


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_toy_energy_never_increases(x0, y0):
    e = toy.run_toy_2axis(x0, y0, 0.5, 2.0, 30).energies
    assert all(b <= a + 1e-12 for a, b in zip(e, e[1:]))


def test_toy_rejects_non_finite_start():
    with pytest.raises(ValueError):
        toy.run_toy_2axis(math.nan, 0.0)


# -- cone bound --------------------------------------------------------------------

def test_cone_bound_tight_at_the_point():
    rep = criticality.cone_bound_check(lambda x: toy.toy_energy(x[0], 0.0), np.zeros(1), 1.0,
                                       samples=5, radius=0.0)
    assert rep.worst_margin == 0.0 and rep.ok


def test_cone_bound_at_toy_origin():
    rep = criticality.cone_bound_check(lambda x: toy.toy_energy(x[0], 0.0), np.zeros(1), 1.0)
    assert rep.ok and rep.samples == 100


def test_cone_bound_at_converged_toy():
    s = toy.run_toy_2axis(-1.0, -1.0, 1.0, 1.0, 200)
    rep = criticality.cone_bound_check(lambda x: toy.toy_energy(x[0], s.y), np.array([s.x]), 1.0)
    assert rep.ok


def test_cone_bound_detects_a_violation():
    # -|x|^2 curves down faster than the quadratic allowance 2*0.1|x|^2
    rep = criticality.cone_bound_check(lambda x: -float(np.dot(x, x)), np.zeros(3), 0.1)
    assert not rep.ok and rep.violations == rep.samples and rep.worst_margin < 0
