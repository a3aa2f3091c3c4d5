import numpy as np
import pytest
from numpy.testing import assert_allclose

from stable_lab.catalog import (
    ball_eigenvalue_constant, brezis_vazquez, classify_regularity,
    default_entries, export_profile_csv, gelfand_regular, gelfand_singular,
    manufactured, parse_catalog_name, sample_to_grid,
)
from stable_lab.grid import build_ball_domain

import oracles


def test_default_entries_inventory():
    es = default_entries()
    names = [e.name for e in es]
    assert len(es) == 21
    assert len(set(names)) == 21
    # every constructor re-verifies its own residual, so arriving here
    # means all 21 passed the 1e-8 construction check


def test_gelfand_singular_exact_residual():
    rs = gelfand_singular(3)
    r = np.geomspace(1e-6, 1.0, 500)
    scale = rs.residual_scale(r)
    assert np.max(np.abs(rs.residual(r)) / scale) < 1e-10
    # u = -2 log r, f multiplier 2(n-2)
    assert_allclose(rs.profile(np.asarray(0.1)), -2.0 * np.log(0.1))
    assert rs.lam == 2.0
    assert rs.singular_at_origin


def test_brezis_vazquez_exact_multiplier():
    rs = brezis_vazquez(5, 2.0)
    # alpha = 2/(p-1) = 2; multiplier lambda_s = alpha (n - 2 - alpha) = 2
    assert rs.lam == pytest.approx(2.0, abs=1e-14)
    r = np.geomspace(1e-5, 1.0, 500)
    assert np.max(np.abs(rs.residual(r)) / rs.residual_scale(r)) < 1e-10


def test_manufactured_quadratic():
    rs = manufactured("quadratic", 3)
    r = np.linspace(0.0, 1.0, 100)
    assert_allclose(rs.profile(r), 1.0 - r ** 2)
    # the radial residual carries a (n-1)/r u' term, so sample r > 0
    assert np.max(np.abs(rs.residual(r[1:]))) < 1e-12
    assert rs.expected_stability == "stable"


def test_manufactured_eigenfunction_solves_eigenproblem():
    rs = manufactured("eigenfunction", 2)
    r = np.linspace(1e-4, 0.999, 300)
    assert np.max(np.abs(rs.residual(r)) / rs.residual_scale(r)) < 1e-8
    # vanishes at the sphere, peaks at the center
    assert abs(float(rs.profile(np.asarray(1.0)))) < 1e-12
    assert float(rs.profile(np.asarray(0.0))) == pytest.approx(1.0)


def test_gelfand_regular_profile():
    rs = gelfand_regular(1.0)
    r = np.linspace(0.02, 1.0, 50)
    assert np.max(np.abs(rs.residual(r)) / rs.residual_scale(r)) < 1e-7
    # u = -2 ln(1 + lam r^2 / 8): zero at the center, decreasing outward
    assert float(rs.profile(np.asarray(0.0))) == 0.0
    assert np.all(np.diff(rs.profile(r)) < 0.0)


def test_ball_eigenvalue_constant_matches_oracle():
    for n in (2, 3, 4, 5):
        assert abs(ball_eigenvalue_constant(n)
                   - oracles.LAMBDA1_BALL[n]) < 1e-9


def test_classifier_agrees_with_declared_class():
    for rs in default_entries():
        assert classify_regularity(rs) == rs.regularity_class, rs.name


def test_sample_to_grid_quadratic():
    rs = manufactured("quadratic", 2)
    d = build_ball_domain(2, np.zeros(2), 1.0, 1 / 16)
    u = sample_to_grid(rs, d)
    assert_allclose(u.values, 1.0 - d.radii() ** 2, atol=1e-12)
    assert_allclose(u.boundary_values, 0.0, atol=1e-12)


def test_sample_to_grid_singular_needs_cap():
    rs = gelfand_singular(3)
    d = build_ball_domain(3, np.zeros(3), 1.0, 1 / 8)
    with pytest.raises(ValueError, match="cap"):
        sample_to_grid(rs, d)
    u = sample_to_grid(rs, d, cap=5.0)
    assert u.values.max() <= 5.0
    assert u.meta.get("cap") == 5.0


def test_sample_to_grid_power_needs_no_cap():
    # bounded value, unbounded gradient: a cap is not required
    rs = manufactured("power:0.5", 2)
    d = build_ball_domain(2, np.zeros(2), 1.0, 1 / 16)
    u = sample_to_grid(rs, d)
    assert u.values.max() <= 1.0 + 1e-12


@pytest.mark.parametrize("name,n,p", [
    ("gelfand:n=3", 3, None),
    ("bv:n=5,p=2", 5, 2.0),
    ("manufactured:quadratic,n=4", 4, None),
    ("gelfand-regular:lam=1", 2, None),
])
def test_parse_catalog_name_roundtrip(name, n, p):
    rs = parse_catalog_name(name)
    assert rs.n == n
    assert rs.name == name or rs.name.startswith(name.split(",")[0])


def test_parse_catalog_name_rejects_unknown():
    with pytest.raises(ValueError):
        parse_catalog_name("does-not-exist:n=3")


def test_export_profile_csv(tmp_path):
    rs = manufactured("quadratic", 2)
    path = tmp_path / "prof.csv"
    export_profile_csv(rs, path, samples=64)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 65  # header + samples
    assert lines[0].startswith("r,")


def test_brezis_vazquez_rejects_bad_exponent():
    # p must keep alpha = 2/(p-1) meaningful and the profile in L^1
    with pytest.raises(ValueError):
        brezis_vazquez(5, 1.0)
