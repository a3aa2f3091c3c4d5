"""Spectral side: bottom Dirichlet eigenvalue of -Delta - V and verdicts.

The lattice eigenproblem runs inverse power iteration on the symmetric flux
form shifted to positive definiteness, with conjugate-gradient inner solves;
singular radial potentials go through a weighted tridiagonal reduction
instead, since an unresolved 1/r^2 on a lattice is meaningless.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .elliptic_solver import _flux_diag, cg
from .grid import BallDomain, GridField, build_ball_domain, flux_apply


class EigenNonConvergence(Exception):
    """Inverse power iteration ran out of iterations."""

    def __init__(self, message, best_lambda):
        super().__init__(message)
        self.best_lambda = best_lambda


@dataclass(frozen=True)
class SpectralResult:
    lambda1: float
    eigenfield: GridField
    iterations: int
    residual: float
    rayleigh_history: tuple = field(default=(), repr=False)

    def as_dict(self):
        return {"lambda1": self.lambda1, "iterations": self.iterations,
                "residual": self.residual}


@dataclass(frozen=True)
class PoincareConstant:
    n: int
    C0: float
    spacing: float


@dataclass(frozen=True)
class StabilityVerdict:
    verdict: str                    # "stable" | "unstable" | "marginal"
    lambda1: float
    tol: float
    spectral: SpectralResult
    eigenfield: Optional[GridField] = None  # witness when unstable

    def as_dict(self):
        return {"verdict": self.verdict, "lambda1": self.lambda1,
                "tol": self.tol}


def _potential_values(domain, V):
    if V is None:
        return np.zeros(domain.num_interior)
    if isinstance(V, GridField):
        if V.domain is not domain:
            raise ValueError("potential lives on a different domain")
        return V.values
    if np.isscalar(V):
        return np.full(domain.num_interior, float(V))
    vals = np.asarray(V, dtype=np.float64)
    if vals.shape != (domain.num_interior,):
        raise ValueError("potential shape does not match the domain")
    return vals


def smallest_eigenvalue(domain, V=None, tol=1e-8, max_outer=500):
    """Bottom eigenpair of -Delta - V with zero Dirichlet data.

    Inverse power iteration on the flux form plus the definiteness shift
    sigma = max(0, max V) + 1; deterministic all-ones start. The eigenfield
    comes back with unit discrete L2 norm, positive at its max-magnitude
    node; ``residual`` is the discrete-L2 eigen-residual.
    """
    vvals = _potential_values(domain, V)
    if not np.all(np.isfinite(vvals)):
        raise ValueError("potential contains non-finite values")
    sigma = max(0.0, float(vvals.max())) + 1.0
    zero_b = np.zeros(domain.num_boundary)
    weight = domain.spacing ** domain.dim  # discrete L2 = sqrt(h^n sum .^2)

    def op(x):
        return flux_apply(x, zero_b, domain) - vvals * x + sigma * x

    inv_diag = 1.0 / np.maximum(_flux_diag(domain) - vvals + sigma, 1e-300)
    cg_maxiter = 40 * (2 * int(np.floor(domain.radius / domain.spacing)) + 1)

    phi = np.ones(domain.num_interior)
    phi /= np.sqrt(weight * float(phi @ phi))
    lam_shifted = float(weight * (phi @ op(phi)))
    history = []
    res = np.inf
    guess = None
    for it in range(1, max_outer + 1):
        z, info = cg(op, phi, inv_diag, 1e-12, cg_maxiter, x0=guess)
        nz = np.sqrt(weight * float(z @ z))
        if nz == 0.0 or not np.isfinite(nz):
            raise EigenNonConvergence(
                "inverse power iteration collapsed", lam_shifted - sigma)
        phi = z / nz
        mphi = op(phi)
        lam_shifted = float(weight * (phi @ mphi))
        lam = lam_shifted - sigma
        history.append(lam)
        r = mphi - lam_shifted * phi
        res = np.sqrt(weight * float(r @ r))
        if res <= tol * max(1.0, abs(lam)):
            imax = int(np.argmax(np.abs(phi)))
            if phi[imax] < 0:
                phi = -phi
            eigenfield = GridField(domain, phi, zero_b)
            return SpectralResult(lambda1=lam, eigenfield=eigenfield,
                                  iterations=it, residual=res,
                                  rayleigh_history=tuple(history))
        guess = phi / lam_shifted if lam_shifted > 0 else None
    raise EigenNonConvergence(
        f"inverse power iteration did not reach residual "
        f"{tol:.1e}*max(1,|lambda|) in {max_outer} iterations "
        f"(best lambda {lam_shifted - sigma:.6e}, residual {res:.2e})",
        lam_shifted - sigma)


def default_stability_tol(domain, vvals):
    """10 h (1 + |V|_inf)^(1/2): discretization error in V and -Delta_h."""
    vmax = float(np.max(np.abs(vvals))) if vvals.size else 0.0
    return 10.0 * domain.spacing * np.sqrt(1.0 + vmax)


def is_stable(u, f, tol=None):
    """Sign of the bottom eigenvalue of the linearization -Delta - f'_-(u)."""
    from .nonlinearity import left_derivative
    domain = u.domain
    if f.left_deriv is not None:
        vvals = np.asarray(f.left_deriv(u.values), dtype=np.float64)
    else:
        vvals = np.array([left_derivative(f, float(t)) for t in u.values])
    if tol is None:
        tol = default_stability_tol(domain, vvals)
    spectral = smallest_eigenvalue(domain, vvals)
    lam = spectral.lambda1
    if lam >= tol:
        verdict = "stable"
    elif lam <= -tol:
        verdict = "unstable"
    else:
        verdict = "marginal"
    witness = spectral.eigenfield if verdict == "unstable" else None
    return StabilityVerdict(verdict=verdict, lambda1=lam, tol=float(tol),
                            spectral=spectral, eigenfield=witness)


_DEFAULT_POINCARE_SPACING = {2: 1 / 64, 3: 1 / 24, 4: 1 / 12, 5: 1 / 8}
_POINCARE_CACHE = {}


def poincare_constant(n, h=None):
    """C0(n) with ∫ v^2 <= C0 r^2 ∫ |Dv|^2 on balls, from the unit ball.

    C0 = 1.05 / lambda_1(B_1, h): the discrete bottom eigenvalue plus a 5%
    safety margin; scale invariance of -Delta transfers the inequality to
    every radius.
    """
    n = int(n)
    if not 2 <= n <= 5:
        raise ValueError(f"dimension must be between 2 and 5, got {n}")
    if h is None:
        h = _DEFAULT_POINCARE_SPACING[n]
    h = float(h)
    key = (n, h)
    if key not in _POINCARE_CACHE:
        domain = build_ball_domain(n, None, 1.0, h)
        lam = smallest_eigenvalue(domain).lambda1
        _POINCARE_CACHE[key] = PoincareConstant(n=n, C0=1.05 / lam, spacing=h)
    return _POINCARE_CACHE[key]


# ---------------------------------------------------------------------------
# Radial reduction for singular potentials
# ---------------------------------------------------------------------------

def _radial_potential(V):
    """Accept a callable V(r), a 'hardy:c=<float>' spec, or a CSV table."""
    if callable(V):
        return V
    if isinstance(V, str):
        s = V.strip()
        if s.startswith("hardy:"):
            body = s[len("hardy:"):]
            if not body.startswith("c="):
                raise ValueError(f"malformed potential spec {V!r}; "
                                 f"expected hardy:c=<float>")
            c = float(body[2:])
            return lambda r: -c / (r * r)
        data = np.loadtxt(s, delimiter=",", ndmin=2, comments="#")
        if data.shape[0] < 2 or data.shape[1] < 2:
            raise ValueError(f"{s}: need at least two (r, V) rows")
        rs, vs = data[:, 0], data[:, 1]
        if np.any(np.diff(rs) <= 0):
            raise ValueError(f"{s}: radii must be strictly increasing")
        return lambda r: np.interp(r, rs, vs)
    raise ValueError("potential must be callable, 'hardy:c=<float>', or a "
                     "CSV path")


def radial_smallest_eigenvalue(n, V, delta=1e-4, grid_points=10000):
    """Bottom eigenvalue of -v'' - ((n-1)/r) v' + V(r) v on (delta, 1).

    Zero Dirichlet data at both ends; uniform grid with ``grid_points``
    subintervals; flux discretization with r^(n-1) midpoint weights,
    symmetrized by the sqrt(r^(n-1)) similarity and handed to a tridiagonal
    eigensolver for the bottom pair only.
    """
    n = int(n)
    delta = float(delta)
    if not 0.0 < delta <= 0.1:
        raise ValueError(f"excision radius delta={delta} must lie in (0, 0.1]")
    m = int(grid_points)
    if m < 100:
        raise ValueError("need at least 100 grid points")
    vfun = _radial_potential(V)

    dr = (1.0 - delta) / m
    r = delta + dr * np.arange(1, m)          # interior nodes
    r_half = delta + dr * (np.arange(m) + 0.5)  # midpoints, one per edge
    w = r_half ** (n - 1)                     # flux weights
    rho = r ** (n - 1)                        # node weights

    vr = np.asarray(vfun(r), dtype=np.float64)
    if not np.all(np.isfinite(vr)):
        raise ValueError("potential is not finite on the excised interval")

    diag = (w[:-1] + w[1:]) / dr ** 2 + vr * rho
    off = -w[1:-1] / dr ** 2
    sq = np.sqrt(rho)
    diag_sym = diag / rho
    off_sym = off / (sq[:-1] * sq[1:])
    vals = eigh_tridiagonal(diag_sym, off_sym, select="i",
                            select_range=(0, 0), eigvals_only=True)
    return float(vals[0])
