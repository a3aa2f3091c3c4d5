import subprocess
import sys

import numpy as np
import pytest

from stable_lab._backend import BACKEND, HAS_NUMBA
from stable_lab._kernels import get_impl
from stable_lab.grid import build_ball_domain

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")


def _sample_problem():
    d = build_ball_domain(3, np.zeros(3), 1.0, 1 / 10)
    rng = np.random.default_rng(42)
    u = rng.standard_normal(d.num_interior)
    b = rng.standard_normal(d.num_boundary)
    return d, u, b


@needs_numba
@pytest.mark.parametrize("kernel", ["apply_pointwise", "apply_flux",
                                    "second_diffs"])
def test_stencil_kernels_bitwise_equal(kernel):
    """Both backends accumulate per node in the same order, so stencil
    outputs must agree to the last bit."""
    d, u, b = _sample_problem()
    np_impl = get_impl("numpy")[kernel]
    nb_impl = get_impl("numba")[kernel]
    inv_h2 = 1.0 / d.spacing ** 2
    a = np_impl(u, b, d.nbr, d.theta, inv_h2)
    c = nb_impl(u, b, d.nbr, d.theta, inv_h2)
    assert np.array_equal(a, c)


@needs_numba
def test_gradient_bitwise_equal():
    d, u, b = _sample_problem()
    a = get_impl("numpy")["gradient"](u, b, d.nbr, d.theta, d.spacing)
    c = get_impl("numba")["gradient"](u, b, d.nbr, d.theta, d.spacing)
    assert np.array_equal(a, c)


@needs_numba
def test_sweep_margins_close():
    # the batched reduction may reassociate, so exactness is not promised
    rng = np.random.default_rng(0)
    g = rng.standard_normal((512, 4, 4))
    mats = 0.5 * (g + np.transpose(g, (0, 2, 1)))
    vecs = rng.standard_normal((512, 4))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    a = get_impl("numpy")["sweep_margins"](mats, vecs)
    c = get_impl("numba")["sweep_margins"](mats, vecs)
    assert np.allclose(a, c, rtol=1e-12, atol=1e-14)


def test_get_impl_rejects_unknown():
    with pytest.raises((KeyError, ValueError, RuntimeError)):
        get_impl("fortran")


def test_backend_constant_is_valid():
    assert BACKEND in ("numba", "numpy")
    if BACKEND == "numba":
        assert HAS_NUMBA


def _import_backend(env_value):
    code = "import stable_lab; print(stable_lab.BACKEND)"
    return subprocess.run(
        [sys.executable, "-c", code],
        env={"PATH": "/usr/bin:/bin", "STABLE_LAB_BACKEND": env_value},
        capture_output=True, text=True)


def test_env_flag_selects_numpy():
    out = _import_backend("numpy")
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "numpy"


@needs_numba
def test_env_flag_selects_numba():
    out = _import_backend("numba")
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "numba"


def test_env_flag_rejects_unknown():
    out = _import_backend("cython")
    assert out.returncode != 0
    assert "STABLE_LAB_BACKEND" in out.stderr
