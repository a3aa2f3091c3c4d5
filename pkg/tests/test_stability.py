import numpy as np
import pytest

from stable_lab.grid import build_ball_domain, grid_field
from stable_lab.nonlinearity import affine
from stable_lab.stability import (
    is_stable, poincare_constant, radial_smallest_eigenvalue,
    smallest_eigenvalue,
)

import oracles


def _ball(n, h):
    return build_ball_domain(n, np.zeros(n), 1.0, h)


def test_ball_eigenvalue_against_shooting_oracle():
    """Lattice inverse iteration vs. radial ODE shooting, two unrelated
    discretizations of the same spectral problem."""
    d = _ball(2, 1 / 64)
    res = smallest_eigenvalue(d)
    assert abs(res.lambda1 - oracles.LAMBDA1_BALL[2]) < 2e-3
    # pinned discrete value
    assert abs(res.lambda1 - oracles.LAMBDA1_DISCRETE[(2, 64)]) < 1e-6


def test_ball_eigenvalue_dimension_three():
    d = _ball(3, 1 / 16)
    res = smallest_eigenvalue(d)
    assert abs(res.lambda1 - np.pi ** 2) < 0.03


def test_ground_state_properties():
    d = _ball(2, 1 / 32)
    res = smallest_eigenvalue(d)
    v = res.eigenfield.values
    # one sign, no interior nodal line for the bottom mode
    assert np.all(v > 0) or np.all(v < 0)
    assert res.residual < 1e-6
    assert res.iterations >= 1
    dd = res.as_dict()
    assert dd["lambda1"] == res.lambda1


def test_constant_potential_shifts_spectrum():
    # the operator is -Delta - V (V plays the role of f'(u))
    d = _ball(2, 1 / 32)
    base = smallest_eigenvalue(d).lambda1
    shifted = smallest_eigenvalue(d, V=2.5).lambda1
    assert abs(shifted - (base - 2.5)) < 1e-6


def test_is_stable_quadratic_solution():
    # u = 1 - |x|^2 solves -Delta u = 2n with f' = 0: linearization is
    # -Delta itself, stable with margin lambda_1(B_1)
    n = 2
    d = _ball(n, 1 / 32)
    u = grid_field(d, lambda x: 1.0 - (x ** 2).sum(axis=1))
    verdict = is_stable(u, affine(0.0, 2.0 * n))
    assert verdict.verdict == "stable"
    assert abs(verdict.lambda1 - oracles.LAMBDA1_BALL[2]) < 5e-3
    assert verdict.eigenfield is None


def test_is_stable_detects_instability():
    # f(t) = 30 t + 1 has f' = 30 > lambda_1(B_1): unstable, with witness
    d = _ball(2, 1 / 24)
    u = grid_field(d, lambda x: np.zeros(len(x)))
    verdict = is_stable(u, affine(30.0, 1.0))
    assert verdict.verdict == "unstable"
    assert verdict.lambda1 < -20.0
    assert verdict.eigenfield is not None


def test_is_stable_marginal_band():
    d = _ball(2, 1 / 24)
    lam1 = smallest_eigenvalue(d).lambda1
    u = grid_field(d, lambda x: np.zeros(len(x)))
    verdict = is_stable(u, affine(lam1, 1.0))
    assert verdict.verdict == "marginal"


def test_poincare_constant_frozen_values():
    c2 = poincare_constant(2)
    c3 = poincare_constant(3)
    assert c2.n == 2 and c2.spacing == 1 / 64
    assert abs(c2.C0 - 1.05 / oracles.LAMBDA1_DISCRETE[(2, 64)]) < 1e-9
    assert abs(c2.C0 - 0.1816) < 5e-4
    assert abs(c3.C0 - 1.05 / oracles.LAMBDA1_DISCRETE[(3, 24)]) < 1e-9
    assert abs(c3.C0 - 0.1065) < 5e-4


def test_poincare_constant_cached():
    a = poincare_constant(2)
    b = poincare_constant(2)
    assert a is b


def test_radial_eigenvalue_flat_potential():
    # n = 3 radial ground state of the ball is sin(pi r)/r: lambda = pi^2;
    # the tiny excision at delta=1e-4 barely moves it
    lam = radial_smallest_eigenvalue(3, lambda r: 0.0 * r)
    assert abs(lam - np.pi ** 2) < 1e-2


@pytest.mark.parametrize("n", [10, 11, 12])
def test_radial_hardy_potential_frozen(n):
    c = 2.0 * (n - 2)
    lam = radial_smallest_eigenvalue(n, lambda r: -c / r ** 2)
    assert abs(lam - oracles.GELFAND_RADIAL_LAMBDA1[n]) < 1e-4
    # consistency with the Hardy threshold: c stays below (n-2)^2/4
    assert c <= oracles.hardy_constant(n)


def test_radial_hardy_potential_subcritical_dimension():
    # below the Hardy threshold the potential wins: bottom eigenvalue dives
    c = 2.0
    lam = radial_smallest_eigenvalue(3, lambda r: -c / r ** 2)
    assert lam < -1e5
    assert c > oracles.hardy_constant(3)


def test_radial_eigenvalue_validation():
    with pytest.raises(ValueError, match="delta"):
        radial_smallest_eigenvalue(3, lambda r: 0 * r, delta=0.5)
    with pytest.raises(ValueError, match="grid points"):
        radial_smallest_eigenvalue(3, lambda r: 0 * r, grid_points=10)
