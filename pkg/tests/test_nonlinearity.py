import numpy as np
import pytest
from numpy.testing import assert_allclose

from stable_lab.nonlinearity import (
    NonLipschitz, affine, exponential, left_derivative, parse_nonlinearity,
    ramp, scaled, shifted_power, tabulated, truncate, verify_class_C,
)

import oracles


# ---------------------------------------------------------------------------
# registry members
# ---------------------------------------------------------------------------

def test_exponential_values_and_derivative():
    f = exponential()
    ts = np.array([-1.0, 0.0, 0.5, 2.0])
    assert_allclose(f(ts), np.exp(ts))
    assert_allclose(f.left_deriv(ts), np.exp(ts))
    # primitive pinned at F(0) = 0: exp(t) - 1
    assert_allclose(f.primitive_fn(np.array([0.0, 1.0])), [0.0, np.e - 1.0])


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_shifted_power(p):
    f = shifted_power(p)
    ts = np.array([-2.0, -1.0, 0.0, 1.0, 3.0])
    assert_allclose(f(ts), np.maximum(1.0 + ts, 0.0) ** p)
    # left derivative agrees with a one-sided difference quotient
    for t in (0.5, 1.0, 2.0):
        assert abs(f.left_deriv(np.asarray(t))
                   - oracles.fd_left_derivative(f, t)) < 1e-5


def test_affine_and_ramp():
    f = affine(2.0, -1.0)
    assert_allclose(f(np.array([0.0, 3.0])), [-1.0, 5.0])
    assert float(f.left_deriv(np.asarray(7.0))) == 2.0
    r = ramp()
    assert_allclose(r(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    # the kink: left derivative at 0 is 0, not 1
    assert float(r.left_deriv(np.asarray(0.0))) == 0.0
    assert float(r.left_deriv(np.asarray(1.0))) == 1.0


def test_left_derivative_numeric_fallback():
    f = exponential()
    bare = type(f)(name="exp-bare", eval=f.eval)
    for t in (-1.0, 0.0, 2.0):
        assert abs(left_derivative(bare, t) - np.exp(t)) < 1e-7


def test_left_derivative_rejects_infinite_slope():
    f = shifted_power(2.0)
    bare = type(f)(name="root", eval=lambda t: np.sqrt(np.abs(t)))
    with pytest.raises(NonLipschitz):
        left_derivative(bare, 0.0)


# ---------------------------------------------------------------------------
# class membership check
# ---------------------------------------------------------------------------

def test_verify_class_c_accepts_registry():
    for f in (exponential(), shifted_power(2.0), affine(1.0, 0.5), ramp()):
        verdict = verify_class_C(f)
        assert verdict.passed, (f.name, verdict.reason)


def test_verify_class_c_catches_decreasing():
    f = affine(1.0, 0.0)
    bad = type(f)(name="dec", eval=lambda t: -np.asarray(t))
    verdict = verify_class_C(bad)
    assert not verdict.passed
    assert not verdict.monotone


def test_verify_class_c_catches_concave():
    f = affine(1.0, 0.0)
    bad = type(f)(name="atan", eval=lambda t: np.arctan(t))
    verdict = verify_class_C(bad, interval=(0.0, 5.0))
    assert not verdict.passed
    assert verdict.monotone
    assert not verdict.convex
    assert verdict.witness_points is not None


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

def test_truncation_agrees_below_and_is_affine_above():
    f = exponential()
    eps = 0.25
    fe = truncate(f, eps)
    cut = 1.0 / eps
    below = np.linspace(-2.0, cut - 1e-9, 100)
    assert_allclose(fe(below), f(below), rtol=1e-14)
    above = np.linspace(cut, cut + 10.0, 50)
    vals = fe(above)
    # second differences vanish on a line
    d2 = np.diff(vals, 2)
    assert np.max(np.abs(d2)) < 1e-9 * np.max(np.abs(vals))
    # tangency: continuous with slope f'(cut)
    assert abs(float(fe(cut)) - float(f(cut))) < 1e-12 * float(f(cut))


def test_truncation_constants():
    f = exponential()
    fe = truncate(f, 0.5)
    assert_allclose(fe.A, np.e)
    assert_allclose(fe.K, np.e - np.e)  # f'(1) - f(1) = 0 for exp
    g = shifted_power(2.0)
    ge = truncate(g, 0.5)
    assert_allclose(ge.A, 4.0)   # 2(1+t) at t=1
    assert_allclose(ge.K, 0.0)   # 4 - 4


def test_truncation_stays_below_f_and_above_minorant():
    # the tangent line of a convex f lies below f, above the affine minorant
    f = exponential()
    fe = truncate(f, 0.25)
    ts = np.linspace(-3.0, 15.0, 400)
    assert np.all(fe(ts) <= f(ts) * (1 + 1e-14) + 1e-14)
    assert np.all(fe(ts) >= fe.A * ts - fe.K - 1e-10)


def test_truncation_monotone_in_epsilon():
    f = exponential()
    ts = np.linspace(0.0, 30.0, 200)
    prev = None
    for eps in (0.5, 0.25, 0.125):  # shrinking eps raises the cut
        vals = truncate(f, eps)(ts)
        if prev is not None:
            assert np.all(vals >= prev - 1e-12)
        prev = vals


def test_truncation_result_is_class_c():
    fe = truncate(exponential(), 0.5)
    assert verify_class_C(fe, interval=(-3.0, 10.0)).passed


def test_truncation_epsilon_validation():
    with pytest.raises(ValueError, match="epsilon"):
        truncate(exponential(), 0.0)
    with pytest.raises(ValueError, match="epsilon"):
        truncate(exponential(), 2.0)


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

def test_scaled_multiplies_everything():
    f = exponential()
    g = scaled(f, 0.5)
    ts = np.array([-1.0, 0.0, 2.0])
    assert_allclose(g(ts), 0.5 * np.exp(ts))
    assert_allclose(g.left_deriv(ts), 0.5 * np.exp(ts))
    assert_allclose(g.primitive_fn(ts), 0.5 * f.primitive_fn(ts))
    assert g.lipschitz_fn(0.0, 1.0) == 0.5 * f.lipschitz_fn(0.0, 1.0)


def test_scaled_identity_and_validation():
    f = exponential()
    assert scaled(f, 1.0) is f
    with pytest.raises(ValueError, match="positive"):
        scaled(f, -2.0)


# ---------------------------------------------------------------------------
# tabulated nonlinearities and the parser
# ---------------------------------------------------------------------------

def _write_table(path, ts, fs):
    with open(path, "w") as fh:
        fh.write("# t,f\n")
        for t, v in zip(ts, fs):
            fh.write(f"{float(t)!r},{float(v)!r}\n")


def test_tabulated_interpolates(tmp_path):
    ts = np.linspace(-2.0, 6.0, 33)
    path = tmp_path / "tab.csv"
    _write_table(path, ts, np.exp(ts))
    f = tabulated(path)
    q = np.array([-1.0, 0.3, 4.9])
    # chord error of exp on spacing 1/4 is about h^2/8 relative
    assert np.max(np.abs(f(q) - np.exp(q)) / np.exp(q)) < 0.01
    assert verify_class_C(f, interval=(-2.0, 6.0)).passed


def test_parse_nonlinearity_grammar(tmp_path):
    assert parse_nonlinearity("exp").name == "exp"
    f = parse_nonlinearity("pow:p=2.5")
    assert_allclose(f(np.asarray(1.0)), 2.0 ** 2.5)
    g = parse_nonlinearity("affine:a=2,b=-1")
    assert_allclose(g(np.asarray(0.0)), -1.0)
    assert parse_nonlinearity("ramp")(np.asarray(3.0)) == 3.0
    ts = np.linspace(0.0, 4.0, 17)
    path = tmp_path / "t.csv"
    _write_table(path, ts, ts ** 2)
    assert parse_nonlinearity(f"table:{path}") is not None


@pytest.mark.parametrize("bad", [
    "", "gauss", "pow", "pow:2", "pow:q=2", "affine:a=1", "affine:0,6",
])
def test_parse_nonlinearity_rejects(bad):
    with pytest.raises(ValueError):
        parse_nonlinearity(bad)
