"""Desk-scale numerical laboratory for stable solutions of -Delta u = f(u)."""

__version__ = "0.1.0"

from ._backend import BACKEND, HAS_NUMBA
from .grid import (
    BallDomain,
    GridField,
    SymmetricMatrixField,
    VectorField,
    build_ball_domain,
    dirichlet_form,
    field_to_csv,
    grid_field,
    gradient,
    hessian,
    integrate,
    laplacian,
    load_field,
    save_field,
    test_field,
    w12_distance,
)

__all__ = [
    "BACKEND",
    "HAS_NUMBA",
    "BallDomain",
    "GridField",
    "SymmetricMatrixField",
    "VectorField",
    "build_ball_domain",
    "dirichlet_form",
    "field_to_csv",
    "grid_field",
    "gradient",
    "hessian",
    "integrate",
    "laplacian",
    "load_field",
    "save_field",
    "test_field",
    "w12_distance",
    "__version__",
]
