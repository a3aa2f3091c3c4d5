"""Monotone approximation of a stable solution through truncated problems.

The scheme replaces the nonlinearity by its left tangent line above the
truncation height, solves one shifted linear problem for a base field, and
then climbs from it by Poisson steps whose right-hand side is the truncated
nonlinearity evaluated at the previous iterate.  Each run records nodewise
ordering, cross-level ordering, the uniform energy bound, and the distance
to the comparator field.
"""

import json
import os
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .elliptic_solver import (ShiftedProblem, _boundary_values,
                              _pointwise_diag, bicgstab,
                              default_max_iterations, solve_poisson,
                              solve_shifted)
from .grid import (GridField, dirichlet_form, integrate,
                   neg_laplacian_values, save_field, w12_distance)
from .nonlinearity import left_derivative, truncate
from .stability import is_stable, poincare_constant

DEFAULT_SCHEDULE = tuple(0.5 ** k for k in range(1, 9))

#: nodewise ordering tolerance for iterate chains
ORDER_TOL = 1e-10

#: linear solver tolerance used inside the scheme
_SOLVE_TOL = 1e-11


class MonotonicityViolation(Exception):
    """An iterate chain lost its nodewise ordering beyond tolerance.

    Signals that the grid is too coarse or that the comparator field is not
    a discrete supersolution of the truncated problem.
    """

    def __init__(self, message, node=None, magnitude=None):
        super().__init__(message)
        self.node = node
        self.magnitude = magnitude


class OrderingDiagnostic(UserWarning):
    """The base field failed to stay below a comparator that solves the
    nonlinear problem; diagnostic only, the run continues."""


def _slope_at_one(f):
    a = float(left_derivative(f, 1.0))
    if not np.isfinite(a):
        raise ValueError("left derivative at 1 is not finite")
    return a


def admissible_radius(f, n):
    """Largest ball radius on which the shifted base problem stays coercive.

    Returns r with 1/(C0(n) r^2) strictly above 8 (1 + f'_-(1)), i.e. the
    smallest Dirichlet eigenvalue of the ball beats the shift with room to
    spare; the factor (1 - 1e-6) keeps the inequality strict.
    """
    a = _slope_at_one(f)
    if 1.0 + a <= 0.0:
        raise ValueError("need f'_-(1) > -1 for an admissible radius")
    c0 = poincare_constant(n).C0
    return float((1.0 - 1e-6) / np.sqrt(8.0 * c0 * (1.0 + a)))


@dataclass(frozen=True)
class ApproximationParameters:
    """Constants of one approximation run; ordering follows the scheme."""

    n: int
    r_star: float
    r0: float
    A: float
    K: float
    epsilon_schedule: tuple = DEFAULT_SCHEDULE
    j_max: int = 500
    fixed_point_tol: float = None  # None -> 1e-9 (1 + |u|_inf) at run time

    def __post_init__(self):
        if self.n != int(self.n) or not 2 <= self.n <= 5:
            raise ValueError("dimension must be an integer in [2, 5]")
        object.__setattr__(self, "n", int(self.n))
        for name in ("r_star", "r0", "A", "K"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0.0 < self.r0 <= self.r_star:
            raise ValueError("need 0 < r0 <= r_star")
        sched = tuple(float(e) for e in self.epsilon_schedule)
        if not sched:
            raise ValueError("epsilon schedule is empty")
        if any(not 0.0 < e <= 1.0 for e in sched):
            raise ValueError("epsilon values must lie in (0, 1]")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("epsilon schedule must be strictly decreasing")
        object.__setattr__(self, "epsilon_schedule", sched)
        if self.j_max < 1:
            raise ValueError("j_max must be at least 1")
        if self.fixed_point_tol is not None:
            tol = float(self.fixed_point_tol)
            if tol <= 0:
                raise ValueError("fixed_point_tol must be positive")
            object.__setattr__(self, "fixed_point_tol", tol)
        # the radius condition, re-verified against the computed constant
        lam_bound = 1.0 / (poincare_constant(self.n).C0 * self.r_star ** 2)
        if not lam_bound > 8.0 * (1.0 + self.A):
            raise ValueError(
                f"radius condition fails: 1/(C0 r_star^2) = {lam_bound:.6g} "
                f"is not above 8 (1 + A) = {8.0 * (1.0 + self.A):.6g}")


def make_parameters(f, n, r0=None, epsilon_schedule=None, j_max=500,
                    fixed_point_tol=None, ambient_distance=None):
    """Bundle the scheme's constants for nonlinearity ``f`` in dimension n.

    ``ambient_distance`` is the distance from the ball's center to the
    boundary of the surrounding domain; when given, the working radius must
    stay below a quarter of it.
    """
    a = _slope_at_one(f)
    k = a - float(f(1.0))
    r_star = admissible_radius(f, n)
    cap = r_star
    if ambient_distance is not None:
        cap = min(cap, float(ambient_distance) / 4.0 * (1.0 - 1e-12))
    if r0 is None:
        r0 = cap
    elif ambient_distance is not None and r0 >= float(ambient_distance) / 4.0:
        raise ValueError("r0 must stay below a quarter of the ambient "
                         "distance")
    if epsilon_schedule is None:
        epsilon_schedule = DEFAULT_SCHEDULE
    return ApproximationParameters(
        n=n, r_star=r_star, r0=r0, A=a, K=k,
        epsilon_schedule=tuple(epsilon_schedule), j_max=j_max,
        fixed_point_tol=fixed_point_tol)


def base_solution(boundary_data, f, domain):
    """Base field: (-Delta - A) u0 = -K with u0 = boundary_data on the sphere,
    where A = f'_-(1) and K = A - f(1).

    When the supplied field itself solves -Delta u = f(u) on the grid, the
    base field must sit below it; a violation raises OrderingDiagnostic as a
    warning, not an error.  An IndefiniteShift from the solver means the
    ball is too large for the shift A.
    """
    u = boundary_data
    if u.domain is not domain:
        raise ValueError("boundary data live on a different domain")
    a = _slope_at_one(f)
    k = a - float(f(1.0))
    rhs = GridField(domain, np.full(domain.num_interior, -k),
                    np.zeros(domain.num_boundary))
    problem = ShiftedProblem(domain, a, rhs, u.boundary_values)
    u0, report = solve_shifted(problem, tol=_SOLVE_TOL)
    u0 = GridField(domain, u0.values, u0.boundary_values,
                   meta={"role": "base", "shift": a, "rhs": -k,
                         "solver_residual": report.final_residual})
    # comparison diagnostic, only meaningful when u solves the full problem
    fu = np.asarray(f(u.values), dtype=np.float64)
    res = neg_laplacian_values(u.values, u.boundary_values, domain) - fu
    scale = 1.0 + float(np.max(np.abs(fu)))
    if float(np.max(np.abs(res))) <= 1e-6 * scale:
        gap = float(np.max(u0.values - u.values))
        if gap > 1e-8:
            i = int(np.argmax(u0.values - u.values))
            warnings.warn(
                f"base field exceeds the solution field by {gap:.3e} at "
                f"node {i}", OrderingDiagnostic)
    return u0


def _assert_ordered(lo, hi, what, epsilon, step, domain):
    gap = lo.values - hi.values
    i = int(np.argmax(gap))
    worst = float(gap[i])
    if worst > ORDER_TOL:
        coords = domain.coords[i].tolist()
        raise MonotonicityViolation(
            f"ordering {what} fails at step {step} (epsilon={epsilon:g}): "
            f"excess {worst:.3e} at node {i} {coords}",
            node=i, magnitude=worst)


def iterate(u, f_eps, domain, params, base=None):
    """Run the fixed-point steps -Delta v_j = f_eps(v_{j-1}), v_j = u on the
    sphere, starting from the base field.

    Returns the list [v_1, ..., v_J]; stops when consecutive iterates agree
    to ``params.fixed_point_tol`` in max norm or at ``params.j_max``.  Each
    step asserts nodewise ordering against the previous iterate and the
    comparator ``u`` and raises MonotonicityViolation on failure.
    """
    if u.domain is not domain:
        raise ValueError("comparator lives on a different domain")
    if base is None:
        base = base_solution(u, f_eps, domain)
    eps = getattr(f_eps, "epsilon", 0.0)
    tol_stop = params.fixed_point_tol
    if tol_stop is None:
        tol_stop = 1e-9 * (1.0 + u.max_norm())
    out = []
    prev = base
    for j in range(1, params.j_max + 1):
        rhs = np.asarray(f_eps(prev.values), dtype=np.float64)
        vj, report = solve_poisson(domain, rhs, u.boundary_values,
                                   tol=_SOLVE_TOL)
        vj = GridField(domain, vj.values, vj.boundary_values,
                       meta={"step": j, "epsilon": eps,
                             "solver_residual": report.final_residual})
        _assert_ordered(prev, vj, "against the previous iterate",
                        eps, j, domain)
        _assert_ordered(vj, u, "against the comparator", eps, j, domain)
        out.append(vj)
        if float(np.max(np.abs(vj.values - prev.values))) <= tol_stop:
            break
        prev = vj
    return out


@dataclass(frozen=True)
class IterationTrace:
    """Everything one approximation run produced, ready for re-verification."""

    base: GridField
    iterates: tuple          # tuple per truncation level, outer level order
    limits: tuple            # final iterate per level
    distances: tuple         # W^{1,2} distance of each limit to the comparator
    verdicts: tuple          # stability verdict per limit
    epsilons: tuple
    comparator: GridField
    params: ApproximationParameters
    meta: dict = field(default_factory=dict)


def approximate(u, f, domain, params=None):
    """Full scheme: one base solve, then the fixed-point run per truncation
    level, with stability verdicts and comparator distances per level.

    ``u`` supplies both the boundary data and the upper comparator; a field
    produced by ``newton_oracle`` is flagged as oracle-produced in the trace.
    """
    if u.domain is not domain:
        raise ValueError("comparator lives on a different domain")
    if params is None:
        params = make_parameters(f, domain.dim, r0=domain.radius)
    if domain.radius > params.r_star:
        raise ValueError(
            f"ball radius {domain.radius:g} exceeds the admissible radius "
            f"{params.r_star:g}")
    base = base_solution(u, f, domain)
    runs, limits, distances, verdicts = [], [], [], []
    for eps in params.epsilon_schedule:
        f_eps = truncate(f, eps)
        its = iterate(u, f_eps, domain, params, base=base)
        runs.append(tuple(its))
        limits.append(its[-1])
        distances.append(w12_distance(its[-1], u))
        verdicts.append(is_stable(its[-1], f_eps))
    # cross-level ordering: a smaller truncation level dominates nodewise
    for li in range(len(runs) - 1):
        lo, hi = runs[li], runs[li + 1]
        for j in range(min(len(lo), len(hi))):
            _assert_ordered(lo[j], hi[j], "across truncation levels",
                            params.epsilon_schedule[li + 1], j + 1, domain)
    tol_d = 1e-8 + 10.0 * domain.spacing
    rises = np.diff(distances)
    if rises.size and float(np.max(rises)) > tol_d:
        warnings.warn(
            f"comparator distances rose by {float(np.max(rises)):.3e} along "
            f"the schedule (tolerance {tol_d:.3e})", OrderingDiagnostic)
    meta = {"oracle_produced":
            u.meta.get("produced_by") == "damped-newton",
            "distance_tol": tol_d}
    return IterationTrace(
        base=base, iterates=tuple(runs), limits=tuple(limits),
        distances=tuple(float(x) for x in distances),
        verdicts=tuple(verdicts), epsilons=params.epsilon_schedule,
        comparator=u, params=params, meta=meta)


def _w12_sq(v):
    return dirichlet_form(v) + integrate(v.values ** 2, domain=v.domain)


def check_claims(trace):
    """Re-verify every invariant of a trace from scratch and report margins.

    Checks nodewise ordering within each level (base through comparator),
    ordering across levels at equal step, the uniform energy bound with a
    1.1 discretization allowance, nonincreasing comparator distances, and
    that every limit is stable or marginal.  Report-returning: never raises.
    """
    u = trace.comparator
    base = trace.base
    domain = base.domain
    params = trace.params

    def scan(pairs):
        worst, witness = np.inf, None
        for eps, j, lo, hi in pairs:
            gap = hi.values - lo.values
            i = int(np.argmin(gap))
            if gap[i] < worst:
                worst = float(gap[i])
                witness = {"epsilon": eps, "step": j, "node": i,
                           "coords": domain.coords[i].tolist(),
                           "margin": float(gap[i])}
        return worst, witness

    in_step = []
    for eps, its in zip(trace.epsilons, trace.iterates):
        chain = (base,) + tuple(its) + (u,)
        for j in range(len(chain) - 1):
            in_step.append((eps, j, chain[j], chain[j + 1]))
    worst_step, wit_step = scan(in_step)

    in_level = []
    for li in range(len(trace.iterates) - 1):
        lo, hi = trace.iterates[li], trace.iterates[li + 1]
        for j in range(min(len(lo), len(hi))):
            in_level.append((trace.epsilons[li + 1], j + 1, lo[j], hi[j]))
    worst_level, wit_level = scan(in_level) if in_level else (np.inf, None)

    au_k = params.A * u.values - params.K
    bound = 1.1 * (2.0 * dirichlet_form(u)
                   + 2.0 * integrate(au_k ** 2, domain=domain)
                   + integrate(np.maximum(base.values ** 2, u.values ** 2),
                               domain=domain))
    worst_w12 = max(_w12_sq(v) for its in trace.iterates for v in its)

    tol_d = trace.meta.get("distance_tol", 1e-8 + 10.0 * domain.spacing)
    rises = np.diff(trace.distances)
    worst_rise = float(np.max(rises)) if rises.size else 0.0

    bad_verdicts = [v.verdict for v in trace.verdicts
                    if v.verdict not in ("stable", "marginal")]

    report = {
        "monotone_in_step": {
            "passed": bool(worst_step >= -ORDER_TOL),
            "worst_margin": worst_step,
            "witness": wit_step if worst_step < -ORDER_TOL else None,
        },
        "monotone_in_level": {
            "passed": bool(worst_level >= -ORDER_TOL),
            "worst_margin": None if not in_level else worst_level,
            "witness": wit_level if worst_level < -ORDER_TOL else None,
        },
        "uniform_bound": {
            "passed": bool(worst_w12 <= bound),
            "max_w12_sq": worst_w12,
            "bound": bound,
        },
        "distances": {
            "passed": bool(worst_rise <= tol_d),
            "values": list(trace.distances),
            "worst_rise": worst_rise,
            "tol": tol_d,
        },
        "stability": {
            "passed": not bad_verdicts,
            "verdicts": [v.verdict for v in trace.verdicts],
        },
    }
    report["passed"] = all(section["passed"] for section in report.values()
                           if isinstance(section, dict))
    return report


def newton_oracle(domain, f, g=0.0, lam=1.0, tol=1e-11, max_steps=60):
    """Damped Newton solve of -Delta u = lam f(u), u = g on the sphere.

    Independent of the approximation scheme: linearizes around the current
    iterate, solves the linearized system with BiCGStab, and halves the step
    until the residual norm decreases.  Returns (field, info) with the field
    flagged as oracle-produced; non-convergence is reported, not raised.
    """
    gvals = _boundary_values(domain, g)
    u, _ = solve_poisson(domain, 0.0, gvals, tol=_SOLVE_TOL)
    uv = u.values.copy()
    maxiter = default_max_iterations(domain)
    diag0 = _pointwise_diag(domain, 0.0)

    def resid(v):
        return (neg_laplacian_values(v, gvals, domain)
                - lam * np.asarray(f(v), dtype=np.float64))

    def slopes(v):
        if f.left_deriv is not None:
            return np.asarray(f.left_deriv(v), dtype=np.float64)
        d = 1e-6 * (1.0 + np.abs(v))
        return (np.asarray(f(v + d), dtype=np.float64)
                - np.asarray(f(v - d), dtype=np.float64)) / (2.0 * d)

    r = resid(uv)
    rnorm = float(np.linalg.norm(r))
    history = [rnorm]
    converged = False
    steps = 0
    for steps in range(1, max_steps + 1):
        scale = 1.0 + float(np.linalg.norm(lam * np.asarray(f(uv))))
        if rnorm <= tol * scale:
            converged = True
            steps -= 1
            break
        vdiag = lam * slopes(uv)

        def op(x):
            return (neg_laplacian_values(x, np.zeros(domain.num_boundary),
                                         domain) - vdiag * x)

        dg = diag0 - vdiag
        inv_diag = 1.0 / np.where(np.abs(dg) > 1e-300, dg, 1.0)
        delta, _info = bicgstab(op, -r, inv_diag, 1e-10, maxiter)
        alpha = 1.0
        accepted = False
        while alpha >= 2.0 ** -30:
            trial = uv + alpha * delta
            rt = resid(trial)
            rtn = float(np.linalg.norm(rt))
            if rtn <= (1.0 - 1e-4 * alpha) * rnorm:
                uv, r, rnorm = trial, rt, rtn
                accepted = True
                break
            alpha *= 0.5
        history.append(rnorm)
        if not accepted:
            break  # residual floor reached; keep the best iterate
    scale = 1.0 + float(np.linalg.norm(lam * np.asarray(f(uv))))
    converged = converged or rnorm <= tol * scale
    out = GridField(domain, uv, gvals,
                    meta={"produced_by": "damped-newton", "lam": lam,
                          "residual": rnorm, "converged": converged})
    info = {"steps": steps, "residual": rnorm, "converged": converged,
            "history": history}
    return out, info


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_trace(trace, directory, keep="last"):
    """Write ``trace.json`` plus retained fields under ``directory``.

    ``keep`` controls the binary payload: "none" stores metadata only,
    "last" adds the base, comparator and the final iterate per level,
    "all" additionally stores every intermediate iterate.
    """
    if keep not in ("none", "last", "all"):
        raise ValueError("keep must be one of none, last, all")
    os.makedirs(directory, exist_ok=True)
    files = {}
    if keep != "none":
        save_field(trace.base, os.path.join(directory, "base.bin"))
        save_field(trace.comparator, os.path.join(directory,
                                                  "comparator.bin"))
        files["base"] = "base.bin"
        files["comparator"] = "comparator.bin"
        files["limits"] = []
        for li, limit in enumerate(trace.limits):
            name = f"level{li:02d}_limit.bin"
            save_field(limit, os.path.join(directory, name))
            files["limits"].append(name)
    if keep == "all":
        files["iterates"] = []
        for li, its in enumerate(trace.iterates):
            names = []
            for j, v in enumerate(its):
                name = f"level{li:02d}_step{j + 1:03d}.bin"
                save_field(v, os.path.join(directory, name))
                names.append(name)
            files["iterates"].append(names)
    doc = {
        "format": "approximation-trace",
        "version": 1,
        "epsilons": list(trace.epsilons),
        "steps_per_level": [len(its) for its in trace.iterates],
        "distances": list(trace.distances),
        "verdicts": [v.as_dict() for v in trace.verdicts],
        "params": asdict(trace.params),
        "meta": dict(trace.meta),
        "report": check_claims(trace),
        "files": files,
    }
    path = os.path.join(directory, "trace.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
