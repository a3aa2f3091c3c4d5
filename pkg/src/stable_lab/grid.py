"""Cartesian discretization of balls in R^n (2 <= n <= 5).

A BallDomain is the set of lattice points strictly inside the sphere
|x - center| = R, together with a neighbor table. Arms that would leave the
ball are cut at the true sphere and carry their arm fraction theta in (0, 1],
so Dirichlet data are imposed on the sphere itself (Shortley-Weller style).

Two discrete Laplacians live on this lattice:

* the pointwise cut-cell operator (``laplacian``) — exact on quadratics at
  every node, used for residuals and solves;
* the symmetric flux form (``flux_apply`` / ``dirichlet_form``) — an exactly
  symmetric M-matrix, used for eigenvalue problems and energies.

They coincide on nodes whose 2n neighbors are all interior.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


def _as_finite(a, what):
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite values")
    return a


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BallDomain:
    """Lattice discretization of the ball B_R(center) with spacing h."""

    dim: int
    center: np.ndarray          # (n,)
    radius: float
    spacing: float
    lattice: np.ndarray         # (Ni, n) int64 offsets from the center node
    coords: np.ndarray          # (Ni, n) node coordinates
    nbr: np.ndarray             # (Ni, 2n) neighbor indices / boundary codes
    theta: np.ndarray           # (Ni, 2n) arm fractions
    boundary_coords: np.ndarray  # (Nb, n) cut points on the sphere
    mass: np.ndarray            # (Ni,) dual-cell volume fractions
    regular: np.ndarray         # (Ni,) True where all 2n neighbors interior
    _keys: np.ndarray = field(repr=False, default=None)
    _strides: np.ndarray = field(repr=False, default=None)
    _halfwidth: int = field(repr=False, default=0)

    @property
    def num_interior(self):
        return self.lattice.shape[0]

    @property
    def num_boundary(self):
        return self.boundary_coords.shape[0]

    def radii(self):
        """Distance of each interior node from the center."""
        return np.sqrt(((self.coords - self.center) ** 2).sum(axis=1))

    def boundary_radii(self):
        return np.sqrt(((self.boundary_coords - self.center) ** 2).sum(axis=1))

    def lookup(self, points):
        """Indices of lattice offset rows ``points`` (int, shape (m, n)).

        Returns int64 indices into the interior arrays, -1 where the
        requested lattice point is not an interior node.
        """
        pts = np.asarray(points, dtype=np.int64)
        squeeze = pts.ndim == 1
        pts = np.atleast_2d(pts)
        shifted = pts + (self._halfwidth + 1)
        side = 2 * self._halfwidth + 3
        inside = np.all((shifted >= 0) & (shifted < side), axis=1)
        key = shifted @ self._strides
        pos = np.searchsorted(self._keys, key)
        pos_c = np.minimum(pos, self._keys.shape[0] - 1)
        ok = inside & (pos < self._keys.shape[0]) & (self._keys[pos_c] == key)
        out = np.where(ok, pos_c, -1)
        return out[0] if squeeze else out


def build_ball_domain(n, center, radius, h):
    """Enumerate the interior lattice of B_R(center) and classify neighbors.

    Deterministic: nodes are in lexicographic lattice order; boundary cut
    points are ordered by (axis, minus-then-plus side, node order).
    """
    n = int(n)
    if not 2 <= n <= 5:
        raise ValueError(f"dimension must be between 2 and 5, got {n}")
    radius = float(radius)
    h = float(h)
    if radius <= 0 or h <= 0:
        raise ValueError("radius and spacing must be positive")
    if h >= radius:
        raise ValueError(f"spacing h={h} must be smaller than the radius {radius}")
    if center is None:
        center = np.zeros(n)
    center = _as_finite(center, "center").reshape(n)

    s = radius / h
    s2 = s * s
    m = int(np.floor(s))

    # enumerate lattice offsets axis by axis, pruning by partial norm
    k_axis = np.arange(-m, m + 1, dtype=np.int64)
    keep = k_axis.astype(np.float64) ** 2 < s2
    pts = k_axis[keep].reshape(-1, 1)
    norm2 = pts[:, 0].astype(np.float64) ** 2
    for _ in range(1, n):
        blocks = []
        bnorms = []
        for k in k_axis:
            sel = norm2 + float(k) ** 2 < s2
            if not np.any(sel):
                continue
            sub = pts[sel]
            blocks.append(np.column_stack(
                [sub, np.full(sub.shape[0], k, dtype=np.int64)]))
            bnorms.append(norm2[sel] + float(k) ** 2)
        pts = np.concatenate(blocks, axis=0)
        norm2 = np.concatenate(bnorms)
    order = np.lexsort(pts.T[::-1])
    lattice = np.ascontiguousarray(pts[order])
    norm2 = norm2[order]
    ni = lattice.shape[0]
    if ni < 2 * n + 1:
        raise ValueError(
            f"spacing h={h} too coarse for radius {radius}: only {ni} interior "
            f"node(s), need at least {2 * n + 1}")

    side = 2 * m + 3
    strides = side ** np.arange(n - 1, -1, -1, dtype=np.int64)
    keys = (lattice + (m + 1)) @ strides

    nbr = np.empty((ni, 2 * n), dtype=np.int64)
    theta = np.ones((ni, 2 * n))
    b_coords = []
    b_count = 0
    kf = lattice.astype(np.float64)
    for i in range(n):
        for side_idx, d in ((0, -1.0), (1, 1.0)):
            key_t = keys + int(d) * strides[i]
            pos = np.searchsorted(keys, key_t)
            pos_c = np.minimum(pos, ni - 1)
            interior = (pos < ni) & (keys[pos_c] == key_t)
            col = 2 * i + side_idx
            nbr[:, col] = np.where(interior, pos_c, 0)
            ext = ~interior
            if np.any(ext):
                ki = kf[ext, i]
                t = -d * ki + np.sqrt(ki * ki - norm2[ext] + s2)
                t = np.minimum(t, 1.0)
                theta[ext, col] = t
                codes = -(b_count + np.arange(t.shape[0], dtype=np.int64)) - 1
                nbr[ext, col] = codes
                cut = kf[ext].copy()
                cut[:, i] += d * t
                b_coords.append(center + h * cut)
                b_count += t.shape[0]
    boundary_coords = (np.concatenate(b_coords, axis=0) if b_coords
                       else np.zeros((0, n)))

    mass = np.ones(ni)
    for i in range(n):
        mass *= 0.5 * (theta[:, 2 * i] + theta[:, 2 * i + 1])
    regular = np.all(nbr >= 0, axis=1)
    coords = center + h * kf

    for a in (lattice, coords, nbr, theta, boundary_coords, mass, regular, keys):
        a.setflags(write=False)

    return BallDomain(
        dim=n, center=center, radius=radius, spacing=h,
        lattice=lattice, coords=coords, nbr=nbr, theta=theta,
        boundary_coords=boundary_coords, mass=mass, regular=regular,
        _keys=keys, _strides=strides, _halfwidth=m)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar values on the interior nodes plus values at boundary cut points."""

    domain: BallDomain
    values: np.ndarray           # (Ni,)
    boundary_values: np.ndarray  # (Nb,)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = _as_finite(self.values, "interior values")
        b = _as_finite(self.boundary_values, "boundary values")
        if v.shape != (self.domain.num_interior,):
            raise ValueError(
                f"interior value count {v.shape} does not match domain "
                f"({self.domain.num_interior} nodes)")
        if b.shape != (self.domain.num_boundary,):
            raise ValueError(
                f"boundary value count {b.shape} does not match domain "
                f"({self.domain.num_boundary} cut points)")
        v.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "boundary_values", b)

    def max_norm(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


@dataclass(frozen=True, eq=False)
class VectorField:
    """n components per interior node (gradients)."""

    domain: BallDomain
    values: np.ndarray  # (Ni, n)

    def __post_init__(self):
        v = _as_finite(self.values, "vector components")
        if v.shape != (self.domain.num_interior, self.domain.dim):
            raise ValueError("vector component shape does not match domain")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def norm(self):
        """|v| per node."""
        return np.sqrt((self.values ** 2).sum(axis=1))


def _tri_index(n):
    """Packed upper-triangle component order: (0,0),(0,1),...,(n-1,n-1)."""
    return [(i, j) for i in range(n) for j in range(i, n)]


@dataclass(frozen=True, eq=False)
class SymmetricMatrixField:
    """Symmetric n x n matrix per interior node, upper triangle packed."""

    domain: BallDomain
    values: np.ndarray  # (Ni, n(n+1)/2)

    def __post_init__(self):
        n = self.domain.dim
        v = _as_finite(self.values, "matrix components")
        if v.shape != (self.domain.num_interior, n * (n + 1) // 2):
            raise ValueError("matrix component shape does not match domain")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def full(self):
        """Unpacked (Ni, n, n) symmetric matrices."""
        n = self.domain.dim
        out = np.empty((self.values.shape[0], n, n))
        for c, (i, j) in enumerate(_tri_index(n)):
            out[:, i, j] = self.values[:, c]
            out[:, j, i] = self.values[:, c]
        return out

    def frobenius_sq(self):
        """|M|_F^2 per node, off-diagonal entries counted twice."""
        n = self.domain.dim
        acc = np.zeros(self.values.shape[0])
        for c, (i, j) in enumerate(_tri_index(n)):
            w = 1.0 if i == j else 2.0
            acc += w * self.values[:, c] ** 2
        return acc

    def apply(self, vec):
        """Matrix-vector product M v per node; vec shape (Ni, n)."""
        n = self.domain.dim
        out = np.zeros_like(vec)
        for c, (i, j) in enumerate(_tri_index(n)):
            out[:, i] += self.values[:, c] * vec[:, j]
            if i != j:
                out[:, j] += self.values[:, c] * vec[:, i]
        return out

    def trace(self):
        n = self.domain.dim
        cols = []
        c = 0
        for i in range(n):
            cols.append(c)
            c += n - i
        return self.values[:, cols].sum(axis=1)


def grid_field(domain, fn, boundary=None, meta=None):
    """Build a GridField from a callable on coordinates or a constant.

    ``fn``: callable taking an (N, n) coordinate array, or a scalar, or an
    (Ni,) array of interior values. ``boundary``: same options evaluated at
    the cut points; None means "same rule as the interior".
    """
    if callable(fn):
        vals = np.asarray(fn(domain.coords), dtype=np.float64)
    elif np.isscalar(fn):
        vals = np.full(domain.num_interior, float(fn))
    else:
        vals = np.asarray(fn, dtype=np.float64)
    if boundary is None:
        if callable(fn):
            bvals = np.asarray(fn(domain.boundary_coords), dtype=np.float64)
        elif np.isscalar(fn):
            bvals = np.full(domain.num_boundary, float(fn))
        else:
            raise ValueError("boundary values required when fn is an array")
    elif callable(boundary):
        bvals = np.asarray(boundary(domain.boundary_coords), dtype=np.float64)
    elif np.isscalar(boundary):
        bvals = np.full(domain.num_boundary, float(boundary))
    else:
        bvals = np.asarray(boundary, dtype=np.float64)
    return GridField(domain, vals, bvals, meta=dict(meta or {}))


def test_field(domain, fn):
    """GridField with zero boundary values (a discrete C_c^{0,1} surrogate)."""
    return grid_field(domain, fn, boundary=0.0)


# ---------------------------------------------------------------------------
# Calculus
# ---------------------------------------------------------------------------

def laplacian(u):
    """Discrete Laplacian (sum of per-axis second differences).

    Exact on quadratics at every node; exact on cubics and O(h^2) at nodes
    whose full 2n-point stencil is interior.
    """
    d = u.domain
    inv_h2 = 1.0 / (d.spacing * d.spacing)
    vals = -_kernels.apply_pointwise(u.values, u.boundary_values,
                                     d.nbr, d.theta, inv_h2)
    return GridField(d, vals, np.zeros(d.num_boundary))


def neg_laplacian_values(u_vals, b_vals, domain):
    """Raw (-Laplacian) application on value arrays (solver hot path)."""
    inv_h2 = 1.0 / (domain.spacing * domain.spacing)
    return _kernels.apply_pointwise(u_vals, b_vals, domain.nbr, domain.theta,
                                    inv_h2)


def flux_apply(u_vals, b_vals, domain):
    """Symmetric flux form of (-Laplacian) on value arrays."""
    inv_h2 = 1.0 / (domain.spacing * domain.spacing)
    return _kernels.apply_flux(u_vals, b_vals, domain.nbr, domain.theta,
                               inv_h2)


def gradient(u):
    """Nonuniform three-point gradient; quadratic-exact at every node."""
    d = u.domain
    g = _kernels.gradient(u.values, u.boundary_values, d.nbr, d.theta,
                          d.spacing)
    return VectorField(d, g)


def _axis_derivative_of(domain, comp, axis, rows):
    """d(comp)/dx_axis at the node subset ``rows``.

    ``comp`` is defined on interior nodes only (a gradient component), so
    the stencil falls back: central -> one-sided second order -> one-sided
    first order -> 0, depending on which lattice neighbors are interior.
    """
    h = domain.spacing
    lat = domain.lattice[rows]
    e = np.zeros(domain.dim, dtype=np.int64)
    e[axis] = 1
    il = domain.lookup(lat - e)
    ir = domain.lookup(lat + e)
    ill = domain.lookup(lat - 2 * e)
    irr = domain.lookup(lat + 2 * e)
    c0 = comp[rows]
    cl = np.where(il >= 0, comp[np.maximum(il, 0)], 0.0)
    cr = np.where(ir >= 0, comp[np.maximum(ir, 0)], 0.0)
    cll = np.where(ill >= 0, comp[np.maximum(ill, 0)], 0.0)
    crr = np.where(irr >= 0, comp[np.maximum(irr, 0)], 0.0)

    out = np.zeros(rows.shape[0])
    both = (il >= 0) & (ir >= 0)
    back2 = ~both & (il >= 0) & (ill >= 0)
    fwd2 = ~both & ~back2 & (ir >= 0) & (irr >= 0)
    back1 = ~both & ~back2 & ~fwd2 & (il >= 0)
    fwd1 = ~both & ~back2 & ~fwd2 & ~back1 & (ir >= 0)
    out[both] = (cr[both] - cl[both]) / (2.0 * h)
    out[back2] = (3.0 * c0[back2] - 4.0 * cl[back2] + cll[back2]) / (2.0 * h)
    out[fwd2] = (-3.0 * c0[fwd2] + 4.0 * cr[fwd2] - crr[fwd2]) / (2.0 * h)
    out[back1] = (c0[back1] - cl[back1]) / h
    out[fwd1] = (cr[fwd1] - c0[fwd1]) / h
    return out


def hessian(u):
    """Second-derivative matrix field.

    Diagonal entries come from the per-axis cut-cell second difference.
    Off-diagonal entries use the four-point cross difference when all four
    diagonal corner nodes are interior, and a symmetrized derivative of the
    gradient components (with one-sided fallbacks) on the cut layer.
    """
    d = u.domain
    n = d.dim
    h = d.spacing
    inv_h2 = 1.0 / (h * h)
    diags = _kernels.second_diffs(u.values, u.boundary_values, d.nbr, d.theta,
                                  inv_h2)
    g = _kernels.gradient(u.values, u.boundary_values, d.nbr, d.theta, h)

    packed = np.empty((d.num_interior, n * (n + 1) // 2))
    for c, (i, j) in enumerate(_tri_index(n)):
        if i == j:
            packed[:, c] = diags[:, i]
            continue
        ei = np.zeros(n, dtype=np.int64)
        ej = np.zeros(n, dtype=np.int64)
        ei[i] = 1
        ej[j] = 1
        ipp = d.lookup(d.lattice + ei + ej)
        ipm = d.lookup(d.lattice + ei - ej)
        imp = d.lookup(d.lattice - ei + ej)
        imm = d.lookup(d.lattice - ei - ej)
        ok = (ipp >= 0) & (ipm >= 0) & (imp >= 0) & (imm >= 0)
        col = np.zeros(d.num_interior)
        v = u.values
        col[ok] = (v[ipp[ok]] - v[ipm[ok]] - v[imp[ok]] + v[imm[ok]]) \
            / (4.0 * h * h)
        bad = np.nonzero(~ok)[0]
        if bad.size:
            digj = _axis_derivative_of(d, g[:, j], i, bad)
            djgi = _axis_derivative_of(d, g[:, i], j, bad)
            col[bad] = 0.5 * (digj + djgi)
        packed[:, c] = col
    return SymmetricMatrixField(d, packed)


def integrate(g, weight=None, domain=None):
    """Midpoint quadrature h^n * sum over interior nodes."""
    if isinstance(g, GridField):
        domain = g.domain
        vals = g.values
    else:
        if domain is None:
            raise ValueError("domain required when integrating a raw array")
        vals = np.asarray(g, dtype=np.float64)
    if weight is not None:
        w = weight.values if isinstance(weight, GridField) else np.asarray(weight)
        vals = vals * w
    out = float(vals.sum() * domain.spacing ** domain.dim)
    if not np.isfinite(out):
        raise ValueError("integral is not finite")
    return out


def dirichlet_form(u, v=None):
    """Flux Dirichlet form a(u, v) = integral of grad u . grad v.

    Interior lattice edges are counted once; cut arms contribute
    (u_p - u_b)(v_p - v_b)/theta. Exactly symmetric, and a(u, u) is the
    energy whose first variation is the flux operator.
    """
    if v is None:
        v = u
    if u.domain is not v.domain:
        raise ValueError("fields live on different domains")
    d = u.domain
    n = d.dim
    acc = 0.0
    for i in range(n):
        # interior edges, plus direction only (each edge once)
        col = 2 * i + 1
        idx = d.nbr[:, col]
        mask = idx >= 0
        q = idx[mask]
        du = u.values[mask] - u.values[q]
        dv = v.values[mask] - v.values[q]
        acc += float((du * dv).sum())
        # cut arms, both directions
        for col in (2 * i, 2 * i + 1):
            idx = d.nbr[:, col]
            bmask = idx < 0
            if not np.any(bmask):
                continue
            b = -idx[bmask] - 1
            du = u.values[bmask] - u.boundary_values[b]
            dv = v.values[bmask] - v.boundary_values[b]
            acc += float((du * dv / d.theta[bmask, col]).sum())
    return acc * d.spacing ** (d.dim - 2)


def staggered_seminorm_sq(domain, vals):
    """Forward-difference gradient energy of the zero-extension of ``vals``.

    Matches the standard lattice Laplacian exactly under summation by parts,
    which makes it a true seminorm for zero-boundary differences.
    """
    vals = np.asarray(vals, dtype=np.float64)
    d = domain
    acc = 0.0
    for i in range(d.dim):
        plus = d.nbr[:, 2 * i + 1]
        up = np.where(plus >= 0, vals[np.maximum(plus, 0)], 0.0)
        acc += float(((up - vals) ** 2).sum())
        minus_ext = d.nbr[:, 2 * i] < 0
        acc += float((vals[minus_ext] ** 2).sum())
    return acc * d.spacing ** (d.dim - 2)


def w12_distance(u, v):
    """Discrete W^{1,2} distance: value L2 norm plus staggered gradient L2 norm."""
    if u.domain is not v.domain:
        raise ValueError("fields live on different domains")
    diff = u.values - v.values
    l2 = np.sqrt(integrate(diff ** 2, domain=u.domain))
    semi = np.sqrt(staggered_seminorm_sq(u.domain, diff))
    return float(l2 + semi)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_MAGIC = b"SLBF0001"


def save_field(u, path):
    """Flat binary layout: header (n, R, h, center, counts), then values."""
    d = u.domain
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        np.array([d.dim], dtype=np.int64).tofile(fh)
        np.array([d.radius, d.spacing], dtype=np.float64).tofile(fh)
        np.asarray(d.center, dtype=np.float64).tofile(fh)
        np.array([d.num_interior, d.num_boundary], dtype=np.int64).tofile(fh)
        np.asarray(u.values, dtype=np.float64).tofile(fh)
        np.asarray(u.boundary_values, dtype=np.float64).tofile(fh)


def load_field(path):
    """Rebuild the (deterministic) domain from the header and load values."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a grid field file")
        n = int(np.fromfile(fh, dtype=np.int64, count=1)[0])
        radius, h = np.fromfile(fh, dtype=np.float64, count=2)
        center = np.fromfile(fh, dtype=np.float64, count=n)
        ni, nb = np.fromfile(fh, dtype=np.int64, count=2)
        vals = np.fromfile(fh, dtype=np.float64, count=int(ni))
        bvals = np.fromfile(fh, dtype=np.float64, count=int(nb))
    domain = build_ball_domain(n, center, radius, h)
    if domain.num_interior != ni or domain.num_boundary != nb:
        raise ValueError(
            f"{path}: node counts {ni}/{nb} do not match the rebuilt domain "
            f"({domain.num_interior}/{domain.num_boundary})")
    return GridField(domain, vals, bvals)


def field_to_csv(u, path):
    """Node coordinates + value (+ boundary flag), one row per node."""
    d = u.domain
    with open(path, "w") as fh:
        cols = ",".join(f"x{i + 1}" for i in range(d.dim))
        fh.write(f"{cols},value,boundary\n")
        for row, val in zip(d.coords, u.values):
            xs = ",".join(repr(float(x)) for x in row)
            fh.write(f"{xs},{val!r},0\n")
        for row, val in zip(d.boundary_coords, u.boundary_values):
            xs = ",".join(repr(float(x)) for x in row)
            fh.write(f"{xs},{val!r},1\n")
