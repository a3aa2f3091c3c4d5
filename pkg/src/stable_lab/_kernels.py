"""Hot numerical kernels, in paired numba and numpy implementations.

Layout conventions shared by every kernel:

* ``u``      — interior node values, shape (Ni,)
* ``bvals``  — boundary node values, shape (Nb,)
* ``nbr``    — neighbor table, shape (Ni, 2n), int64; column 2i is the
               axis-i minus neighbor, column 2i+1 the plus neighbor.
               Entries >= 0 index into ``u``; entry v < 0 encodes the
               boundary node ``bvals[-v-1]``.
* ``theta``  — arm fractions in (0, 1], shape (Ni, 2n); 1.0 for arms that
               end on an interior node, the cut fraction for arms that hit
               the sphere.

Both backends accumulate axis terms in the same order so results agree
bitwise on identical input.
"""

import numpy as np

from ._backend import BACKEND, HAS_NUMBA


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _gather(u, bvals, idx):
    """Neighbor values: interior from u, negative codes from bvals."""
    return np.where(idx >= 0, u[np.maximum(idx, 0)], bvals[np.maximum(-idx - 1, 0)])


def _np_apply_pointwise(u, bvals, nbr, theta, inv_h2):
    """Cut-cell consistent (-Laplacian): exact on quadratics at every node."""
    n = nbr.shape[1] // 2
    out = np.zeros_like(u)
    for i in range(n):
        tl = theta[:, 2 * i]
        tr = theta[:, 2 * i + 1]
        ul = _gather(u, bvals, nbr[:, 2 * i])
        ur = _gather(u, bvals, nbr[:, 2 * i + 1])
        out += (2.0 * u / (tl * tr)
                - 2.0 * ul / (tl * (tl + tr))
                - 2.0 * ur / (tr * (tl + tr))) * inv_h2
    return out


def _np_apply_flux(u, bvals, nbr, theta, inv_h2):
    """Symmetric flux form of (-Laplacian): exact M-matrix symmetry."""
    n = nbr.shape[1] // 2
    out = np.zeros_like(u)
    for i in range(n):
        tl = theta[:, 2 * i]
        tr = theta[:, 2 * i + 1]
        ul = _gather(u, bvals, nbr[:, 2 * i])
        ur = _gather(u, bvals, nbr[:, 2 * i + 1])
        out += ((u - ul) / tl + (u - ur) / tr) * inv_h2
    return out


def _np_gradient(u, bvals, nbr, theta, h):
    """Three-point gradient on the nonuniform arms; quadratic-exact."""
    n = nbr.shape[1] // 2
    out = np.empty((u.shape[0], n), dtype=u.dtype)
    for i in range(n):
        a = theta[:, 2 * i]
        b = theta[:, 2 * i + 1]
        ul = _gather(u, bvals, nbr[:, 2 * i])
        ur = _gather(u, bvals, nbr[:, 2 * i + 1])
        out[:, i] = (a * a * ur - b * b * ul + (b * b - a * a) * u) \
            / (a * b * (a + b) * h)
    return out


def _np_second_diffs(u, bvals, nbr, theta, inv_h2):
    """Per-axis second differences (the Hessian diagonal)."""
    n = nbr.shape[1] // 2
    out = np.empty((u.shape[0], n), dtype=u.dtype)
    for i in range(n):
        tl = theta[:, 2 * i]
        tr = theta[:, 2 * i + 1]
        ul = _gather(u, bvals, nbr[:, 2 * i])
        ur = _gather(u, bvals, nbr[:, 2 * i + 1])
        out[:, i] = (2.0 * ul / (tl * (tl + tr))
                     + 2.0 * ur / (tr * (tl + tr))
                     - 2.0 * u / (tl * tr)) * inv_h2
    return out


def _np_sweep_margins(mats, vecs):
    """Normalized margins of the trace/projection matrix inequality.

    margin = ((n-1)[|M|^2 - 2|Me|^2 + <Me,e>^2] - (tr M - <Me,e>)^2)
             / (1 + |M|^4)
    """
    n = mats.shape[1]
    me = np.einsum("tij,tj->ti", mats, vecs)
    tr = np.einsum("tii->t", mats)
    mee = np.einsum("ti,ti->t", me, vecs)
    fro = np.einsum("tij,tij->t", mats, mats)
    me2 = np.einsum("ti,ti->t", me, me)
    lhs = (tr - mee) ** 2
    rhs = (n - 1) * (fro - 2.0 * me2 + mee * mee)
    return (rhs - lhs) / (1.0 + fro * fro)


# ---------------------------------------------------------------------------
# numba implementations (same arithmetic, explicit node loops)
# ---------------------------------------------------------------------------

if HAS_NUMBA:
    from numba import njit, prange

    @njit(cache=True)
    def _nb_apply_pointwise(u, bvals, nbr, theta, inv_h2):
        ni, two_n = nbr.shape
        n = two_n // 2
        out = np.empty(ni, dtype=u.dtype)
        for p in range(ni):
            up = u[p]
            acc = 0.0
            for i in range(n):
                jl = nbr[p, 2 * i]
                jr = nbr[p, 2 * i + 1]
                tl = theta[p, 2 * i]
                tr = theta[p, 2 * i + 1]
                ul = u[jl] if jl >= 0 else bvals[-jl - 1]
                ur = u[jr] if jr >= 0 else bvals[-jr - 1]
                acc += (2.0 * up / (tl * tr)
                        - 2.0 * ul / (tl * (tl + tr))
                        - 2.0 * ur / (tr * (tl + tr))) * inv_h2
            out[p] = acc
        return out

    @njit(cache=True)
    def _nb_apply_flux(u, bvals, nbr, theta, inv_h2):
        ni, two_n = nbr.shape
        n = two_n // 2
        out = np.empty(ni, dtype=u.dtype)
        for p in range(ni):
            up = u[p]
            acc = 0.0
            for i in range(n):
                jl = nbr[p, 2 * i]
                jr = nbr[p, 2 * i + 1]
                tl = theta[p, 2 * i]
                tr = theta[p, 2 * i + 1]
                ul = u[jl] if jl >= 0 else bvals[-jl - 1]
                ur = u[jr] if jr >= 0 else bvals[-jr - 1]
                acc += ((up - ul) / tl + (up - ur) / tr) * inv_h2
            out[p] = acc
        return out

    @njit(cache=True)
    def _nb_gradient(u, bvals, nbr, theta, h):
        ni, two_n = nbr.shape
        n = two_n // 2
        out = np.empty((ni, n), dtype=u.dtype)
        for p in range(ni):
            up = u[p]
            for i in range(n):
                jl = nbr[p, 2 * i]
                jr = nbr[p, 2 * i + 1]
                a = theta[p, 2 * i]
                b = theta[p, 2 * i + 1]
                ul = u[jl] if jl >= 0 else bvals[-jl - 1]
                ur = u[jr] if jr >= 0 else bvals[-jr - 1]
                out[p, i] = (a * a * ur - b * b * ul + (b * b - a * a) * up) \
                    / (a * b * (a + b) * h)
        return out

    @njit(cache=True)
    def _nb_second_diffs(u, bvals, nbr, theta, inv_h2):
        ni, two_n = nbr.shape
        n = two_n // 2
        out = np.empty((ni, n), dtype=u.dtype)
        for p in range(ni):
            up = u[p]
            for i in range(n):
                jl = nbr[p, 2 * i]
                jr = nbr[p, 2 * i + 1]
                tl = theta[p, 2 * i]
                tr = theta[p, 2 * i + 1]
                ul = u[jl] if jl >= 0 else bvals[-jl - 1]
                ur = u[jr] if jr >= 0 else bvals[-jr - 1]
                out[p, i] = (2.0 * ul / (tl * (tl + tr))
                             + 2.0 * ur / (tr * (tl + tr))
                             - 2.0 * up / (tl * tr)) * inv_h2
        return out

    @njit(cache=True, parallel=True)
    def _nb_sweep_margins(mats, vecs):
        m, n, _ = mats.shape
        out = np.empty(m, dtype=mats.dtype)
        for t in prange(m):
            tr = 0.0
            fro = 0.0
            mee = 0.0
            me2 = 0.0
            for i in range(n):
                mei = 0.0
                for j in range(n):
                    mij = mats[t, i, j]
                    fro += mij * mij
                    mei += mij * vecs[t, j]
                tr += mats[t, i, i]
                mee += mei * vecs[t, i]
                me2 += mei * mei
            lhs = (tr - mee) ** 2
            rhs = (n - 1) * (fro - 2.0 * me2 + mee * mee)
            out[t] = (rhs - lhs) / (1.0 + fro * fro)
        return out


_IMPLS = {
    "numpy": {
        "apply_pointwise": _np_apply_pointwise,
        "apply_flux": _np_apply_flux,
        "gradient": _np_gradient,
        "second_diffs": _np_second_diffs,
        "sweep_margins": _np_sweep_margins,
    }
}
if HAS_NUMBA:
    _IMPLS["numba"] = {
        "apply_pointwise": _nb_apply_pointwise,
        "apply_flux": _nb_apply_flux,
        "gradient": _nb_gradient,
        "second_diffs": _nb_second_diffs,
        "sweep_margins": _nb_sweep_margins,
    }


def get_impl(backend):
    """Kernel table for an explicit backend name (tests, benchmarks)."""
    return _IMPLS[backend]


_active = _IMPLS[BACKEND]

apply_pointwise = _active["apply_pointwise"]
apply_flux = _active["apply_flux"]
gradient = _active["gradient"]
second_diffs = _active["second_diffs"]
sweep_margins = _active["sweep_margins"]
