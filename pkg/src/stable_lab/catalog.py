"""Closed-form radial benchmark solutions with known stability status.

Every entry is verified at construction: the radial residual
-u'' - ((n-1)/r) u' - lambda f(u) must vanish to 1e-8 relative, pointwise,
on a dense sample. Singular profiles are first-class citizens — grid
sampling caps them explicitly and records the capping radius, so their
failure to lie in W^{1,2} is never silently regularized away.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import j0, j1, jn_zeros, spherical_jn

from . import nonlinearity as nl
from .grid import GridField


@dataclass(frozen=True)
class RadialSolution:
    """A radial profile u(r) on (0, 1] solving -Delta u = lambda f(u)."""

    name: str
    n: int
    profile: Callable                 # u(r), vectorized
    dprofile: Callable                # u'(r)
    f: Optional[nl.Nonlinearity]      # None when the rhs is only a profile
    lam: Optional[float]
    singular_at_origin: bool
    expected_stability: Optional[str]  # stable|unstable|marginal|dimension_dependent
    regularity_class: str             # smooth | W12_not_Linf | L1_not_W12
    d2profile: Optional[Callable] = None
    rhs_profile: Optional[Callable] = None  # -Delta u as a radial map
    params: dict = field(default_factory=dict)

    def residual(self, r):
        """Radial PDE residual -u'' - ((n-1)/r) u' - lambda f(u) at r."""
        r = np.asarray(r, dtype=np.float64)
        if self.d2profile is not None:
            d2 = self.d2profile(r)
        else:
            d2 = _fd_derivative(self.dprofile, r)
        du = self.dprofile(r)
        lhs = -d2 - (self.n - 1) / r * du
        rhs = self._rhs(r)
        return lhs - rhs

    def _rhs(self, r):
        if self.rhs_profile is not None:
            return self.rhs_profile(r)
        return self.lam * self.f(self.profile(r))

    def residual_scale(self, r):
        """Pointwise magnitude of the residual's constituent terms."""
        r = np.asarray(r, dtype=np.float64)
        if self.d2profile is not None:
            d2 = self.d2profile(r)
        else:
            d2 = _fd_derivative(self.dprofile, r)
        du = self.dprofile(r)
        return (1.0 + np.abs(d2) + np.abs((self.n - 1) / r * du)
                + np.abs(self._rhs(r)))


def _fd_derivative(fn, r, step=1e-3):
    """Five-point central first derivative (used for u'' from u')."""
    r = np.asarray(r, dtype=np.float64)
    h = step
    return (fn(r - 2 * h) - 8.0 * fn(r - h) + 8.0 * fn(r + h)
            - fn(r + 2 * h)) / (12.0 * h)


def _verify_construction(rs, samples=10000):
    """Pointwise-relative residual check; raises on failure."""
    if rs.d2profile is not None:
        r = np.linspace(1e-6, 1.0, samples)
    else:
        # finite-difference u'' needs room for the stencil near 0
        r = np.linspace(2.2e-3, 1.0, samples)
    res = np.abs(rs.residual(r))
    scale = rs.residual_scale(r)
    worst = float(np.max(res / scale))
    if not worst <= 1e-8:
        bad = int(np.argmax(res / scale))
        raise ValueError(
            f"{rs.name}: radial residual {res[bad]:.3e} at r={r[bad]:.6f} "
            f"exceeds 1e-8 relative (scale {scale[bad]:.3e})")
    return rs


# ---------------------------------------------------------------------------
# Entries
# ---------------------------------------------------------------------------

def gelfand_singular(n):
    """u = -2 ln|x| solving -Delta u = 2(n-2) e^u; stable iff n >= 10.

    The Hardy comparison 2(n-2) <= (n-2)^2/4 decides stability of the
    singular solution; both sides are recorded in params.
    """
    n = int(n)
    if n < 3:
        raise ValueError("the profile -2 ln r degenerates below dimension 3")
    lam = 2.0 * (n - 2)
    hardy_lhs = 2.0 * (n - 2)
    hardy_rhs = 0.25 * (n - 2) ** 2
    rs = RadialSolution(
        name=f"gelfand:n={n}", n=n,
        profile=lambda r: -2.0 * np.log(r),
        dprofile=lambda r: -2.0 / r,
        d2profile=lambda r: 2.0 / r ** 2,
        f=nl.exponential(), lam=lam,
        singular_at_origin=True,
        expected_stability="dimension_dependent",
        regularity_class="W12_not_Linf",
        params={"hardy_lhs": hardy_lhs, "hardy_rhs": hardy_rhs,
                "stable_dimension": hardy_lhs <= hardy_rhs})
    return _verify_construction(rs)


def brezis_vazquez(n, p):
    """u = r^(-2/(p-1)) - 1 solving -Delta u = lambda_s (1+u)^p.

    lambda_s = 2/(p-1) (n - 2p/(p-1)). In the admissible strip
    n/(n-2) < p <= (n + 2 sqrt(n-1))/(n - 4 + 2 sqrt(n-1)) the solution is
    stable and lies in L^1 but not W^{1,2}; outside it the flags clear and
    the object is still constructed so the boundary can be probed.
    """
    n = int(n)
    p = float(p)
    if not 3 <= n <= 9:
        raise ValueError(f"dimension must be between 3 and 9, got {n}")
    if p <= 1:
        raise ValueError("need p > 1")
    alpha = 2.0 / (p - 1.0)
    lam = alpha * (n - 2.0 - alpha)
    lower = n / (n - 2.0)
    root = 2.0 * np.sqrt(n - 1.0)
    upper = (n + root) / (n - 4.0 + root)
    admissible = p > lower
    in_stable_range = admissible and p <= upper
    not_w12 = alpha >= 0.5 * (n - 2.0)  # p <= (n+2)/(n-2)
    rs = RadialSolution(
        name=f"bv:n={n},p={p:g}", n=n,
        profile=lambda r: r ** (-alpha) - 1.0,
        dprofile=lambda r: -alpha * r ** (-alpha - 1.0),
        d2profile=lambda r: alpha * (alpha + 1.0) * r ** (-alpha - 2.0),
        f=nl.shifted_power(p), lam=lam,
        singular_at_origin=True,
        expected_stability="stable" if in_stable_range else "unstable",
        regularity_class="L1_not_W12" if not_w12 else "W12_not_Linf",
        params={"p": p, "alpha": alpha, "lambda_s": lam,
                "admissible_lower": lower, "stable_upper": upper,
                "admissible": admissible,
                "in_stable_range": in_stable_range})
    return _verify_construction(rs)


@lru_cache(maxsize=None)
def ball_eigenvalue_constant(n):
    """lambda_1(B_1, R^n) = j_{n/2-1,1}^2 from Bessel zeros."""
    if n == 2:
        return float(jn_zeros(0, 1)[0] ** 2)
    if n == 3:
        return float(np.pi ** 2)
    if n == 4:
        return float(jn_zeros(1, 1)[0] ** 2)
    if n == 5:
        # first zero of the spherical Bessel function j_1
        return float(brentq(lambda x: spherical_jn(1, x), 3.5, 6.0) ** 2)
    raise ValueError(f"dimension must be between 2 and 5, got {n}")


def _eigen_profile(n):
    """Radial first Dirichlet eigenfunction of B_1, normalized u(0) = 1.

    The closed forms divide by powers of x = sqrt(lambda_1) r, whose
    numerators cancel catastrophically near the origin; below x = 0.1 the
    truncated power series (relative error well under 1e-10) takes over.
    """
    k = np.sqrt(ball_eigenvalue_constant(n))

    def guarded(r, formula, coeffs, cut=0.1):
        x = k * np.asarray(r, dtype=np.float64)
        small = np.abs(x) < cut
        xs = np.where(small, 1.0, x)  # keep the formula's domain safe
        x2 = x * x
        series = coeffs[-1]
        for c in coeffs[-2::-1]:
            series = c + x2 * series
        return np.where(small, series, formula(xs))

    if n == 2:
        prof = lambda r: j0(k * np.asarray(r))
        dprof = lambda r: -k * j1(k * np.asarray(r))
        d2prof = lambda r: -k * k * guarded(
            r, lambda x: j0(x) - j1(x) / x,
            (0.5, -3.0 / 16.0, 5.0 / 384.0), cut=0.05)
    elif n == 3:
        prof = lambda r: guarded(
            r, lambda x: np.sin(x) / x,
            (1.0, -1.0 / 6.0, 1.0 / 120.0, -1.0 / 5040.0))
        dprof = lambda r: k * _odd_guarded(
            k, r, lambda x: (x * np.cos(x) - np.sin(x)) / x ** 2,
            (-1.0 / 3.0, 1.0 / 30.0, -1.0 / 840.0))
        d2prof = lambda r: k * k * guarded(
            r, lambda x: ((2.0 - x * x) * np.sin(x)
                          - 2.0 * x * np.cos(x)) / x ** 3,
            (-1.0 / 3.0, 1.0 / 10.0, -1.0 / 168.0))
    elif n == 4:
        prof = lambda r: guarded(
            r, lambda x: 2.0 * j1(x) / x,
            (1.0, -1.0 / 8.0, 1.0 / 192.0, -1.0 / 9216.0))
        dprof = lambda r: k * _odd_guarded(
            k, r, lambda x: 2.0 * (x * j0(x) - 2.0 * j1(x)) / x ** 2,
            (-1.0 / 4.0, 1.0 / 48.0, -1.0 / 1536.0))
        d2prof = lambda r: k * k * guarded(
            r, lambda x: 2.0 * (6.0 * j1(x) - 3.0 * x * j0(x)
                                - x * x * j1(x)) / x ** 3,
            (-1.0 / 4.0, 1.0 / 16.0, -5.0 / 1536.0))
    elif n == 5:
        prof = lambda r: guarded(
            r, lambda x: 3.0 * (np.sin(x) - x * np.cos(x)) / x ** 3,
            (1.0, -1.0 / 10.0, 1.0 / 280.0, -1.0 / 15120.0))
        dprof = lambda r: k * _odd_guarded(
            k, r, lambda x: 3.0 * ((x * x - 3.0) * np.sin(x)
                                   + 3.0 * x * np.cos(x)) / x ** 4,
            (-1.0 / 5.0, 1.0 / 70.0, -1.0 / 2520.0))
        d2prof = lambda r: k * k * guarded(
            r, lambda x: 3.0 * ((x ** 3 - 12.0 * x) * np.cos(x)
                                - (5.0 * x * x - 12.0) * np.sin(x)) / x ** 5,
            (-1.0 / 5.0, 3.0 / 70.0, -1.0 / 504.0))
    else:
        raise ValueError(f"dimension must be between 2 and 5, got {n}")
    return prof, dprof, d2prof


def _odd_guarded(k, r, formula, coeffs, cut=0.1):
    """Series branch x*(c0 + c1 x^2 + ...) for odd functions of x = k r."""
    x = k * np.asarray(r, dtype=np.float64)
    small = np.abs(x) < cut
    xs = np.where(small, 1.0, x)
    x2 = x * x
    series = coeffs[-1]
    for c in coeffs[-2::-1]:
        series = c + x2 * series
    return np.where(small, x * series, formula(xs))


def manufactured(kind, n):
    """Smooth ground truths: 'quadratic', 'eigenfunction', or 'power:<beta>'."""
    n = int(n)
    if not 2 <= n <= 5:
        raise ValueError(f"dimension must be between 2 and 5, got {n}")
    if kind == "quadratic":
        rs = RadialSolution(
            name=f"manufactured:quadratic,n={n}", n=n,
            profile=lambda r: 1.0 - np.asarray(r) ** 2,
            dprofile=lambda r: -2.0 * np.asarray(r),
            d2profile=lambda r: np.full_like(np.asarray(r, dtype=np.float64),
                                             -2.0),
            f=nl.affine(0.0, 2.0 * n), lam=1.0,
            singular_at_origin=False,
            expected_stability="stable", regularity_class="smooth")
        return _verify_construction(rs)
    if kind == "eigenfunction":
        lam1 = ball_eigenvalue_constant(n)
        prof, dprof, d2prof = _eigen_profile(n)
        rs = RadialSolution(
            name=f"manufactured:eigenfunction,n={n}", n=n,
            profile=prof, dprofile=dprof, d2profile=d2prof,
            f=nl.affine(lam1, 0.0), lam=1.0,
            singular_at_origin=False,
            expected_stability="marginal", regularity_class="smooth",
            params={"lambda1": lam1})
        return _verify_construction(rs)
    if kind.startswith("power:"):
        beta = float(kind[len("power:"):])
        if not 0.0 < beta <= 1.0:
            raise ValueError(f"power exponent must lie in (0, 1], got {beta}")
        coeff = beta * (n + beta - 2.0)
        rs = RadialSolution(
            name=f"manufactured:power:{beta:g},n={n}", n=n,
            profile=lambda r: np.asarray(r) ** beta,
            dprofile=lambda r: beta * np.asarray(r) ** (beta - 1.0),
            d2profile=lambda r: beta * (beta - 1.0)
            * np.asarray(r) ** (beta - 2.0),
            f=None, lam=None,
            singular_at_origin=beta < 1.0,  # unbounded gradient, finite value
            expected_stability=None, regularity_class="smooth",
            rhs_profile=lambda r: -coeff * np.asarray(r) ** (beta - 2.0),
            params={"beta": beta})
        return _verify_construction(rs)
    raise ValueError(
        f"unknown manufactured kind {kind!r}; expected quadratic, "
        f"eigenfunction, or power:<beta>")


def gelfand_regular(lam=1.0):
    """u = -2 ln(1 + lam r^2/8) solving -Delta u = lam e^u in the plane.

    Regular companion of the singular entry: smooth at the origin, stable on
    B_1 for the allowed multipliers (max of lam e^u is lam, below the first
    eigenvalue of the unit disk).
    """
    lam = float(lam)
    if not 0.0 < lam <= 4.0:
        raise ValueError(f"multiplier must lie in (0, 4], got {lam}")
    c = lam / 8.0

    def g(r):
        return 1.0 + c * np.asarray(r, dtype=np.float64) ** 2

    rs = RadialSolution(
        name=f"gelfand-regular:lam={lam:g}", n=2,
        profile=lambda r: -2.0 * np.log(g(r)),
        dprofile=lambda r: -4.0 * c * np.asarray(r) / g(r),
        d2profile=lambda r: -4.0 * c * (1.0 - c * np.asarray(r) ** 2)
        / g(r) ** 2,
        f=nl.exponential(), lam=lam,
        singular_at_origin=False,
        expected_stability="stable", regularity_class="smooth",
        params={"lam": lam})
    return _verify_construction(rs)


# ---------------------------------------------------------------------------
# Grid sampling and classification
# ---------------------------------------------------------------------------

def sample_to_grid(rs, domain, cap=None):
    """Nodewise u(|x|) with singular profiles truncated at ``cap``.

    The capping radius r_cap (where u(r_cap) = cap) goes into the field's
    meta, together with the cap itself. Smooth profiles ignore a cap that
    never binds.
    """
    if not np.allclose(domain.center, 0.0):
        raise ValueError("radial sampling requires a domain centered at 0")
    if rs.regularity_class != "smooth" and (cap is None or not cap > 0):
        raise ValueError(
            f"{rs.name} is unbounded at the origin; a positive cap is required")
    radii = np.maximum(domain.radii(), 1e-300)
    with np.errstate(over="ignore", divide="ignore"):
        vals = np.asarray(rs.profile(radii), dtype=np.float64)
    vals = np.where(np.isfinite(vals), vals, np.inf)  # origin blow-up; cap binds
    meta = {"profile": rs.name}
    if cap is not None:
        capped = vals > cap
        r_cap = None
        if np.any(capped):
            vals = np.minimum(vals, cap)
            lo = 1e-300
            if rs.profile(np.asarray(domain.radius)) < cap:
                r_cap = float(brentq(
                    lambda r: float(rs.profile(np.asarray(r))) - cap,
                    lo, domain.radius))
        meta["cap"] = float(cap)
        meta["r_cap"] = r_cap
    bvals = np.asarray(rs.profile(domain.boundary_radii()), dtype=np.float64)
    return GridField(domain, vals, bvals, meta=meta)


def classify_regularity(rs, fit_range=(1e-6, 1e-2), samples=200):
    """Exponent-fit regularity class near the origin.

    Fits the gradient exponent g with |u'| ~ r^g on a log ladder. Values
    g > -1 leave u bounded ("smooth" for this catalog); -n/2 < g <= -1 is
    unbounded u with finite Dirichlet energy (the g = -1 borderline is the
    logarithm); g <= -n/2 fails the W^{1,2} test while staying integrable
    for every admissible entry.
    """
    r = np.geomspace(fit_range[0], fit_range[1], samples)
    du = np.abs(np.asarray(rs.dprofile(r), dtype=np.float64))
    if np.max(du) < 1e-14:
        return "smooth"
    g = np.polyfit(np.log(r), np.log(np.maximum(du, 1e-300)), 1)[0]
    if g > -1.0 + 1e-3:
        return "smooth"
    if g > -0.5 * rs.n + 1e-3:
        return "W12_not_Linf"
    return "L1_not_W12"


# ---------------------------------------------------------------------------
# Naming and export
# ---------------------------------------------------------------------------

def parse_catalog_name(name):
    """Resolve a CLI catalog name like gelfand:n=3 or bv:n=5,p=2."""
    name = name.strip()
    try:
        if name.startswith("gelfand-regular:"):
            kv = _kv(name[len("gelfand-regular:"):])
            return gelfand_regular(kv["lam"])
        if name.startswith("gelfand:"):
            kv = _kv(name[len("gelfand:"):])
            return gelfand_singular(int(kv["n"]))
        if name.startswith("bv:"):
            kv = _kv(name[len("bv:"):])
            return brezis_vazquez(int(kv["n"]), kv["p"])
        if name.startswith("manufactured:"):
            body = name[len("manufactured:"):]
            head, _, tail = body.rpartition(",")
            kv = _kv(tail)
            return manufactured(head, int(kv["n"]))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"cannot resolve catalog name {name!r}: {exc}") from exc
    raise ValueError(
        f"unknown catalog name {name!r}; expected gelfand:n=<int>, "
        f"bv:n=<int>,p=<float>, manufactured:<kind>,n=<int>, or "
        f"gelfand-regular:lam=<float>")


def _kv(body):
    out = {}
    for part in body.split(","):
        if "=" not in part:
            raise ValueError(f"malformed key=value part {part!r}")
        key, val = part.split("=", 1)
        out[key.strip()] = float(val)
    return out


def default_entries():
    """The canonical catalog listing."""
    entries = [gelfand_singular(n) for n in (3, 9, 10, 11, 12)]
    entries += [brezis_vazquez(5, 2.0), brezis_vazquez(7, 1.6),
                brezis_vazquez(9, 1.3)]
    entries += [manufactured("quadratic", n) for n in (2, 3, 4, 5)]
    entries += [manufactured("eigenfunction", n) for n in (2, 3, 4, 5)]
    entries += [manufactured(f"power:{b}", 2) for b in (0.25, 0.5, 0.75, 1.0)]
    entries.append(gelfand_regular(1.0))
    return entries


def export_profile_csv(rs, path, samples=512, r_min=None):
    """Write (r, u, u', residual) rows for plotting."""
    if r_min is None:
        r_min = 2.2e-3 if rs.d2profile is None else 1e-6
    r = np.linspace(r_min, 1.0, samples)
    u = np.asarray(rs.profile(r), dtype=np.float64)
    du = np.asarray(rs.dprofile(r), dtype=np.float64)
    res = np.asarray(rs.residual(r), dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("r,u,du,residual\n")
        for row in zip(r, u, du, res):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
