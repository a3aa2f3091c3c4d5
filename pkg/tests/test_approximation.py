import numpy as np
import pytest

from stable_lab.approximation import (
    admissible_radius, approximate, base_solution, check_claims,
    make_parameters, newton_oracle, save_trace,
)
from stable_lab.grid import build_ball_domain, laplacian
from stable_lab.nonlinearity import affine, exponential, left_derivative
from stable_lab.stability import poincare_constant


def _ball(n, h, radius):
    return build_ball_domain(n, np.zeros(n), radius, h)


def test_admissible_radius_formula():
    f = exponential()
    A = left_derivative(f, 1.0)
    C0 = poincare_constant(2).C0
    want = (1.0 - 1e-6) / np.sqrt(8.0 * C0 * (1.0 + A))
    assert abs(admissible_radius(f, 2) - want) < 1e-12
    assert abs(admissible_radius(f, 2) - 0.4303) < 5e-4


def test_admissible_radius_frozen_affine():
    assert abs(admissible_radius(affine(0.0, 1.0), 2) - 0.8297) < 5e-4


def test_make_parameters_defaults():
    f = exponential()
    p = make_parameters(f, 2, r0=0.4)
    assert p.r_star >= 0.4
    assert p.epsilon_schedule == tuple(0.5 ** k for k in range(1, 9))
    assert p.A == pytest.approx(np.e)
    assert p.K == pytest.approx(0.0)


def test_make_parameters_rejects_oversized_ball():
    f = exponential()
    with pytest.raises(ValueError, match="r0"):
        make_parameters(f, 2, r0=0.9)  # exp admits only ~0.43 in the plane


def test_newton_oracle_solves():
    d = _ball(2, 1 / 32, 0.4)
    u, rep = newton_oracle(d, exponential())
    assert rep["converged"]
    assert rep["steps"] <= 10
    res = laplacian(u).values + np.exp(u.values)
    assert np.max(np.abs(res)) < 1e-9
    assert u.meta.get("produced_by") == "damped-newton"
    # small ball, zero boundary: positive interior hump
    assert u.values.min() > 0.0
    assert u.values.max() < 0.1


def test_base_solution_sits_below_comparator():
    d = _ball(2, 1 / 32, 0.4)
    f = exponential()
    u, _ = newton_oracle(d, f)
    base = base_solution(u, f, d)
    assert np.all(base.values <= u.values + 1e-12)


def test_approximate_and_claims():
    """Four truncation levels of the constructive scheme against the Newton
    comparator; every ordering and stability claim must certify."""
    d = _ball(2, 1 / 32, 0.4)
    f = exponential()
    u, _ = newton_oracle(d, f)
    params = make_parameters(f, 2, r0=0.4,
                             epsilon_schedule=tuple(0.5 ** k
                                                    for k in range(1, 5)))
    trace = approximate(u, f, d, params)
    assert len(trace.limits) == 4
    assert trace.epsilons == params.epsilon_schedule

    report = check_claims(trace)
    assert report["passed"], report
    for key in ("monotone_in_step", "monotone_in_level", "uniform_bound",
                "distances", "stability"):
        assert report[key]["passed"], (key, report[key])

    # once the cut 1/eps clears max u (~0.04), the truncation is inactive
    # and the fixed point lands on the comparator
    assert trace.distances[-1] < 1e-6
    assert trace.distances[0] >= trace.distances[-1]


def test_iterates_increase_within_level():
    d = _ball(2, 1 / 24, 0.4)
    f = exponential()
    u, _ = newton_oracle(d, f)
    params = make_parameters(f, 2, r0=0.4, epsilon_schedule=(0.5,))
    trace = approximate(u, f, d, params)
    steps = trace.iterates[0]
    for lo, hi in zip(steps, steps[1:]):
        assert np.all(hi.values >= lo.values - 1e-10)
    # and every iterate stays below the comparator
    for it in steps:
        assert np.all(it.values <= u.values + 1e-10)


def test_save_trace_keep_policies(tmp_path):
    d = _ball(2, 1 / 24, 0.4)
    f = exponential()
    u, _ = newton_oracle(d, f)
    params = make_parameters(f, 2, r0=0.4, epsilon_schedule=(0.5, 0.25))
    trace = approximate(u, f, d, params)

    import json

    last_dir = tmp_path / "last"
    doc = json.loads(_as_path(save_trace(trace, last_dir,
                                         keep="last")).read_text())
    files = doc["files"]
    # the manifest names are relative to the directory and must all exist
    assert (last_dir / files["base"]).exists()
    assert (last_dir / files["comparator"]).exists()
    assert len(files["limits"]) == 2
    for name in files["limits"]:
        assert (last_dir / name).exists()
    assert "iterates" not in files
    assert doc["report"]["passed"]

    all_dir = tmp_path / "all"
    doc_all = json.loads(_as_path(save_trace(trace, all_dir,
                                             keep="all")).read_text())
    stored = sum(len(level) for level in doc_all["files"]["iterates"])
    assert stored >= 2
    assert len(list(all_dir.iterdir())) > len(list(last_dir.iterdir()))

    none_dir = tmp_path / "none"
    save_trace(trace, none_dir, keep="none")
    assert [p.name for p in none_dir.iterdir()] == ["trace.json"]


def _as_path(p):
    from pathlib import Path
    return Path(p)
