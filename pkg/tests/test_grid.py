import numpy as np
import pytest
from numpy.testing import assert_allclose

from stable_lab.grid import (
    build_ball_domain, grid_field, laplacian,
    gradient, hessian, integrate, dirichlet_form, w12_distance,
    save_field, load_field, field_to_csv,
)
from stable_lab.grid import test_field as zero_boundary_field

import oracles


@pytest.mark.parametrize("n,h", [(2, 1 / 8), (2, 1 / 17), (3, 1 / 6)])
def test_lattice_matches_brute_force(n, h):
    d = build_ball_domain(n, np.zeros(n), 1.0, h)
    expected = oracles.brute_force_ball_lattice(n, 1.0, h)
    assert d.num_interior == len(expected)
    assert np.array_equal(d.lattice, expected)


def test_lattice_off_center():
    c = np.array([0.3, -0.1])
    d = build_ball_domain(2, c, 0.55, 1 / 16)
    assert_allclose(d.coords, c + d.lattice * d.spacing)
    assert np.all(d.radii() < 0.55)
    assert_allclose(d.boundary_radii(), 0.55, atol=1e-12)


def test_frozen_node_counts():
    # pinned so silent changes to the enumeration are caught
    assert build_ball_domain(2, np.zeros(2), 1.0, 1 / 64).num_interior == 12849
    assert build_ball_domain(3, np.zeros(3), 1.0, 1 / 24).num_interior == 57747


def test_neighbor_tables_are_consistent():
    d = build_ball_domain(2, np.zeros(2), 1.0, 1 / 16)
    assert d.nbr.shape == (d.num_interior, 4)
    assert d.theta.shape == (d.num_interior, 4)
    # interior arms have theta = 1, cut arms 0 < theta <= 1
    cut = d.nbr < 0
    assert np.all(d.theta[~cut] == 1.0)
    assert np.all(d.theta[cut] > 0.0)
    assert np.all(d.theta[cut] <= 1.0)
    # cut codes index the boundary table exactly once each
    codes = -(d.nbr[cut]) - 1
    assert sorted(codes.tolist()) == list(range(d.num_boundary))
    # regular nodes are exactly those without a cut arm
    assert np.array_equal(d.regular, ~cut.any(axis=1))
    assert np.all(d.mass > 0.0)
    assert np.all(d.mass <= 1.0)


def test_lookup_roundtrip():
    d = build_ball_domain(3, np.zeros(3), 0.7, 1 / 9)
    idx = d.lookup(d.lattice)
    assert np.array_equal(idx, np.arange(d.num_interior))
    far = np.array([[50, 0, 0], [0, 0, 50]])
    assert np.array_equal(d.lookup(far), [-1, -1])
    assert d.lookup(d.lattice[5]) == 5


@pytest.mark.parametrize("n", [2, 3])
def test_laplacian_exact_on_quadratics(n):
    """The cut-cell stencil reproduces constant curvature at every node,
    including the irregular ones next to the boundary."""
    d = build_ball_domain(n, np.zeros(n), 1.0, 1 / 12)
    u = grid_field(d, lambda x: (x ** 2).sum(axis=1) + 3.0 * x[:, 0] - 1.0)
    lap = laplacian(u)
    assert_allclose(lap.values, 2.0 * n, rtol=0, atol=1e-9)


def test_gradient_exact_on_affine():
    d = build_ball_domain(2, np.zeros(2), 1.0, 1 / 10)
    u = grid_field(d, lambda x: 2.0 * x[:, 0] - 5.0 * x[:, 1] + 0.25)
    g = gradient(u)
    assert_allclose(g.values[:, 0], 2.0, atol=1e-10)
    assert_allclose(g.values[:, 1], -5.0, atol=1e-10)


def test_hessian_exact_on_quadratics():
    d = build_ball_domain(2, np.zeros(2), 1.0, 1 / 12)
    u = grid_field(d, lambda x: x[:, 0] ** 2 - 0.5 * x[:, 1] ** 2
                   + 0.75 * x[:, 0] * x[:, 1])
    H = hessian(u).full()
    assert_allclose(H[:, 0, 0], 2.0, atol=1e-8)
    assert_allclose(H[:, 1, 1], -1.0, atol=1e-8)
    assert_allclose(H[:, 0, 1], 0.75, atol=1e-8)
    assert_allclose(H[:, 1, 0], H[:, 0, 1], atol=0)


def test_gradient_converges_on_smooth_field():
    errs = []
    for h in (1 / 16, 1 / 32):
        d = build_ball_domain(2, np.zeros(2), 1.0, h)
        u = grid_field(d, lambda x: np.sin(x[:, 0]) * np.cos(x[:, 1]))
        g = gradient(u)
        exact = np.cos(d.coords[:, 0]) * np.cos(d.coords[:, 1])
        errs.append(np.max(np.abs(g.values[:, 0] - exact)))
    order = np.log2(errs[0] / errs[1])
    assert order > 0.9


@pytest.mark.parametrize("n,vol", [(2, np.pi), (3, 4 * np.pi / 3)])
def test_integrate_ball_volume(n, vol):
    d = build_ball_domain(n, np.zeros(n), 1.0, 1 / 32)
    one = zero_boundary_field(d, lambda x: np.ones(len(x)))
    assert abs(integrate(one) - vol) < 0.05 * vol
    # weighted variant agrees with the radial oracle
    w = d.radii() ** 2
    got = integrate(one, weight=w)
    want = oracles.ball_integral(lambda r: r ** 2, n)
    assert abs(got - want) < 0.05 * want


def test_dirichlet_form_quadratic():
    # u = 1 - |x|^2 on B_1 in the plane: integral of |Du|^2 is 2 pi
    d = build_ball_domain(2, np.zeros(2), 1.0, 1 / 64)
    u = grid_field(d, lambda x: 1.0 - (x ** 2).sum(axis=1))
    assert abs(dirichlet_form(u) - 2 * np.pi) < 0.01 * 2 * np.pi
    # bilinear symmetry
    v = grid_field(d, lambda x: x[:, 0])
    assert_allclose(dirichlet_form(u, v), dirichlet_form(v, u), rtol=1e-12)


def test_w12_distance_axioms():
    d = build_ball_domain(2, np.zeros(2), 1.0, 1 / 16)
    u = zero_boundary_field(d, lambda x: x[:, 0] ** 2)
    v = zero_boundary_field(d, lambda x: np.abs(x[:, 1]))
    assert w12_distance(u, u) == 0.0
    assert w12_distance(u, v) == w12_distance(v, u)
    assert w12_distance(u, v) > 0.0


def test_test_field_has_zero_boundary():
    d = build_ball_domain(2, np.zeros(2), 1.0, 1 / 16)
    u = zero_boundary_field(d, lambda x: np.ones(len(x)))
    assert np.all(u.boundary_values == 0.0)


def test_grid_field_boundary_callable():
    d = build_ball_domain(2, np.zeros(2), 1.0, 1 / 16)
    u = grid_field(d, lambda x: x[:, 0], boundary=lambda x: x[:, 0])
    assert_allclose(u.boundary_values, d.boundary_coords[:, 0], atol=1e-12)


def _random_field(d, rng):
    from stable_lab.grid import GridField
    return GridField(d, rng.standard_normal(d.num_interior),
                     rng.standard_normal(d.num_boundary))


def test_save_load_roundtrip(tmp_path):
    d = build_ball_domain(3, np.array([0.1, 0.0, -0.2]), 0.8, 1 / 7)
    rng = np.random.default_rng(11)
    u = _random_field(d, rng)
    path = tmp_path / "field.slf"
    save_field(u, path)
    v = load_field(path)
    assert v.domain.dim == 3
    assert v.domain.num_interior == d.num_interior
    assert np.array_equal(v.values, u.values)
    assert np.array_equal(v.boundary_values, u.boundary_values)
    assert_allclose(v.domain.center, d.center)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "junk.slf"
    path.write_bytes(b"definitely not a field file")
    with pytest.raises(ValueError, match="not a grid field"):
        load_field(path)


def test_field_to_csv(tmp_path):
    d = build_ball_domain(2, np.zeros(2), 0.5, 1 / 8)
    u = zero_boundary_field(d, lambda x: x[:, 0] + x[:, 1])
    path = tmp_path / "field.csv"
    field_to_csv(u, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x1,x2,value,boundary"
    assert len(lines) == 1 + d.num_interior + d.num_boundary


def test_bad_dimension_rejected():
    with pytest.raises(ValueError, match="dimension"):
        build_ball_domain(7, np.zeros(7), 1.0, 0.25)
