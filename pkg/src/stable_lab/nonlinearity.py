"""Nonlinearity toolkit: evaluation, left derivative, primitive, truncation.

Built-in closed forms (exponential, shifted power, affine, ramp, tabulated)
carry exact left derivatives and primitives. Black-box maps fall back to a
Richardson-extrapolated one-sided difference for f'_- and adaptive Simpson
quadrature for F. The truncation keeps f below the cut 1/eps and continues
with the left tangent line above it, which makes it globally Lipschitz while
preserving monotonicity and convexity.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np


class NonLipschitz(Exception):
    """One-sided difference quotients diverged over the probe ladder."""


def _scalar_ok(fn):
    """Wrap an array-only map so scalars come back as floats."""
    def wrapped(t):
        arr = np.asarray(t, dtype=np.float64)
        out = fn(arr)
        return float(out) if np.isscalar(t) or arr.ndim == 0 else out
    return wrapped


@dataclass(frozen=True)
class Nonlinearity:
    """A scalar map f with optional exact left derivative and primitive.

    ``eval`` must accept numpy arrays. Missing ``left_deriv`` /
    ``primitive_fn`` are filled in numerically by the free functions below.
    """

    name: str
    eval: Callable
    left_deriv: Optional[Callable] = None
    primitive_fn: Optional[Callable] = None
    lipschitz_fn: Optional[Callable] = None

    def __call__(self, t):
        arr = np.asarray(t, dtype=np.float64)
        out = np.asarray(self.eval(arr), dtype=np.float64)
        return float(out) if arr.ndim == 0 else out


@dataclass(frozen=True)
class TruncatedNonlinearity(Nonlinearity):
    """f below the cut 1/epsilon, its left tangent line above.

    A = f'_-(1) and K = f'_-(1) - f(1) are the constants of the affine
    minorant f_eps(t) >= A t - K.
    """

    base: Nonlinearity = None
    epsilon: float = 1.0
    A: float = 0.0
    K: float = 0.0
    cut: float = field(default=1.0, repr=False)
    cut_value: float = field(default=0.0, repr=False)
    cut_slope: float = field(default=0.0, repr=False)


@dataclass(frozen=True)
class ClassCVerdict:
    """Outcome of the sampled nondecreasing/convexity check."""

    passed: bool
    monotone: bool
    convex: bool
    witness_points: Optional[tuple] = None
    witness_values: Optional[tuple] = None
    reason: str = ""


# ---------------------------------------------------------------------------
# Free functions
# ---------------------------------------------------------------------------

def left_derivative(f, t):
    """Left derivative f'_-(t).

    Exact branch derivative when the nonlinearity registers one; otherwise a
    one-sided difference ladder h = 1e-3 ... 1e-8 with Richardson
    extrapolation. Divergence of the quotients raises NonLipschitz.
    """
    t = float(t)
    if f.left_deriv is not None:
        out = f.left_deriv(np.asarray(t))
        return float(out)
    f0 = float(f(t))
    hs = 10.0 ** -np.arange(3, 9)
    q = np.array([(f0 - float(f(t - h))) / h for h in hs])
    if not np.all(np.isfinite(q)) or np.abs(q[-1]) > 30.0 * (np.abs(q[0]) + 1.0):
        raise NonLipschitz(
            f"one-sided difference quotients diverge near t={t}: "
            f"{q[0]:.3e} -> {q[-1]:.3e} as h shrinks 1e-3 -> 1e-8")
    # quotients behave like f'_- + c h for Lipschitz f; one Richardson step
    # with ratio 10 removes the linear term
    r = (10.0 * q[1:] - q[:-1]) / 9.0
    return float(r[-1])


def primitive(f, t):
    """F(t) = integral of f from 0 to t, F(0) = 0.

    Uses the registered closed form when available, else adaptive Simpson.
    """
    t = float(t)
    if f.primitive_fn is not None:
        return float(f.primitive_fn(np.asarray(t)))
    if t == 0.0:
        return 0.0
    return _adaptive_simpson(f, 0.0, t, 1e-12)


def _adaptive_simpson(f, a, b, tol, depth=48):
    fa, fm, fb = float(f(a)), float(f(0.5 * (a + b))), float(f(b))
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    return _simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)


def _simpson_step(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = float(f(lm)), float(f(rm))
    left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
    right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return (_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def lipschitz_bound_on(f, interval):
    """Upper estimate of the Lipschitz constant of f on [a, b]."""
    a, b = float(interval[0]), float(interval[1])
    if a > b:
        raise ValueError("empty interval")
    if f.lipschitz_fn is not None:
        return float(f.lipschitz_fn(a, b))
    ts = np.linspace(a, b, 129)
    vals = np.asarray(f(ts), dtype=np.float64)
    quotients = np.abs(np.diff(vals)) / np.diff(ts)
    ends = [abs(left_derivative(f, a)), abs(left_derivative(f, b))]
    return float(max(quotients.max(), *ends))


def verify_class_C(f, interval=(-5.0, 5.0), samples=1001):
    """Sampled check that f is nondecreasing and midpoint convex.

    On the uniform ladder the midpoint of (t_i, t_{i+2}) is t_{i+1}, so
    convexity is f(t_{i+1}) <= (f(t_i) + f(t_{i+2}))/2. The verdict carries
    the first violating sample triple.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    samples = int(samples)
    if samples < 3:
        raise ValueError("need at least 3 samples")
    ts = np.linspace(a, b, samples)
    vals = np.asarray(f(ts), dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        return ClassCVerdict(False, False, False,
                             (ts[bad],), (vals[bad],),
                             f"non-finite value at t={ts[bad]}")
    scale = 1.0 + float(np.max(np.abs(vals)))
    slack = 1e-12 * scale

    diffs = vals[1:] - vals[:-1]
    mono_bad = np.flatnonzero(diffs < -slack)
    monotone = mono_bad.size == 0
    gaps = vals[2:] + vals[:-2] - 2.0 * vals[1:-1]
    conv_bad = np.flatnonzero(gaps < -slack)
    convex = conv_bad.size == 0

    if monotone and convex:
        return ClassCVerdict(True, True, True, reason="")
    # first violation in ladder order, monotonicity reported first
    if not monotone and (convex or mono_bad[0] <= conv_bad[0]):
        i = int(mono_bad[0])
        pts = (float(ts[i]), float(ts[i + 1]),
               float(ts[min(i + 2, samples - 1)]))
        vls = (float(vals[i]), float(vals[i + 1]),
               float(vals[min(i + 2, samples - 1)]))
        return ClassCVerdict(False, monotone, convex, pts, vls,
                             f"decreasing between t={pts[0]} and t={pts[1]}")
    i = int(conv_bad[0])
    pts = (float(ts[i]), float(ts[i + 1]), float(ts[i + 2]))
    vls = (float(vals[i]), float(vals[i + 1]), float(vals[i + 2]))
    return ClassCVerdict(False, monotone, convex, pts, vls,
                         f"midpoint convexity fails on [{pts[0]}, {pts[2]}]")


def truncate(f, epsilon):
    """Tangent-line truncation of f at the level 1/epsilon.

    Below 1/epsilon the map is f itself; above, the left tangent line at
    1/epsilon. The result is globally Lipschitz with constant f'_-(1/eps)
    and satisfies f_eps(t) >= A t - K with A = f'_-(1), K = A - f(1).
    """
    epsilon = float(epsilon)
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    cut = 1.0 / epsilon
    cut_value = float(f(cut))
    cut_slope = left_derivative(f, cut)
    a_const = left_derivative(f, 1.0)
    k_const = a_const - float(f(1.0))

    base_eval = f.eval
    base_left = f.left_deriv

    def ev(t):
        t = np.asarray(t, dtype=np.float64)
        low = t < cut
        out = np.empty_like(t)
        out[low] = np.asarray(base_eval(t[low]), dtype=np.float64)
        out[~low] = cut_value + cut_slope * (t[~low] - cut)
        return out

    def ld(t):
        t = np.asarray(t, dtype=np.float64)
        flat = np.atleast_1d(t).copy()
        out = np.full(flat.shape, cut_slope)
        low = flat <= cut  # left derivative at the cut is the base's
        if base_left is not None:
            out[low] = np.asarray(base_left(flat[low]), dtype=np.float64)
        else:
            out[low] = [left_derivative(f, float(s)) for s in flat[low]]
        return out.reshape(t.shape)

    f_primitive = f.primitive_fn
    if f_primitive is not None:
        prim_cut = float(f_primitive(np.asarray(cut)))
    else:
        prim_cut = _adaptive_simpson(f, 0.0, cut, 1e-12)

    def prim(t):
        t = np.asarray(t, dtype=np.float64)
        flat = np.atleast_1d(t)
        clipped = np.minimum(flat, cut)
        if f_primitive is not None:
            low_val = np.asarray(f_primitive(clipped), dtype=np.float64)
        else:
            low_val = np.array([_adaptive_simpson(f, 0.0, float(s), 1e-12)
                                for s in clipped])
        s = np.maximum(flat - cut, 0.0)
        out = np.where(flat <= cut, low_val,
                       prim_cut + cut_value * s + 0.5 * cut_slope * s * s)
        return out.reshape(t.shape)

    def lip(a, b):
        return max(abs(float(np.atleast_1d(ld(a))[0])),
                   abs(float(np.atleast_1d(ld(b))[0])))

    return TruncatedNonlinearity(
        name=f"{f.name}|eps={epsilon:g}", eval=_scalar_ok(ev),
        left_deriv=_scalar_ok(ld), primitive_fn=_scalar_ok(prim),
        lipschitz_fn=lip, base=f, epsilon=epsilon,
        A=a_const, K=k_const, cut=cut, cut_value=cut_value,
        cut_slope=cut_slope)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def exponential():
    return Nonlinearity(
        name="exp",
        eval=np.exp,
        left_deriv=np.exp,
        primitive_fn=lambda t: np.expm1(t),
        lipschitz_fn=lambda a, b: float(np.exp(b)))


def shifted_power(p):
    """f(t) = (1 + t)_+^p; convex and nondecreasing for p >= 1."""
    p = float(p)

    def ev(t):
        return np.maximum(1.0 + t, 0.0) ** p

    def ld(t):
        base = np.maximum(1.0 + t, 0.0)
        return np.where(base > 0.0, p * base ** (p - 1.0), 0.0)

    def prim(t):
        base = np.maximum(1.0 + t, 0.0)
        val = (base ** (p + 1.0) - 1.0) / (p + 1.0)
        return np.where(t >= -1.0, val, -1.0 / (p + 1.0))

    def lip(a, b):
        return float(max(abs(ld(np.asarray(a))), abs(ld(np.asarray(b)))))

    return Nonlinearity(name=f"pow:p={p:g}", eval=ev, left_deriv=ld,
                        primitive_fn=prim, lipschitz_fn=lip)


def affine(a, b):
    a, b = float(a), float(b)
    return Nonlinearity(
        name=f"affine:a={a:g},b={b:g}",
        eval=lambda t: a * t + b,
        left_deriv=lambda t: np.full_like(np.asarray(t, dtype=np.float64), a),
        primitive_fn=lambda t: 0.5 * a * t * t + b * t,
        lipschitz_fn=lambda lo, hi: abs(a))


def ramp():
    return Nonlinearity(
        name="ramp",
        eval=lambda t: np.maximum(t, 0.0),
        # left branch at the kink is the zero function
        left_deriv=lambda t: np.where(np.asarray(t) > 0.0, 1.0, 0.0),
        primitive_fn=lambda t: 0.5 * np.maximum(t, 0.0) ** 2,
        lipschitz_fn=lambda a, b: 1.0 if b > 0 else 0.0)


def scaled(f, factor):
    """factor * f; a positive factor preserves monotonicity and convexity."""
    factor = float(factor)
    if not factor > 0.0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    if factor == 1.0:
        return f
    return Nonlinearity(
        name=f"{f.name}-x{factor:g}",
        eval=lambda t: factor * f.eval(t),
        left_deriv=(None if f.left_deriv is None
                    else lambda t: factor * f.left_deriv(t)),
        primitive_fn=(None if f.primitive_fn is None
                      else lambda t: factor * f.primitive_fn(t)),
        lipschitz_fn=(None if f.lipschitz_fn is None
                      else lambda lo, hi: factor * f.lipschitz_fn(lo, hi)))


def tabulated(path):
    """Piecewise-linear interpolant of a two-column (t, f) CSV table.

    Left derivative at a node is the slope of the segment ending there;
    outside the table range the end segments extend, keeping the map
    globally Lipschitz.
    """
    data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    if data.shape[0] < 2 or data.shape[1] < 2:
        raise ValueError(f"{path}: need at least two (t, f) rows")
    ts = data[:, 0]
    fs = data[:, 1]
    if np.any(np.diff(ts) <= 0):
        raise ValueError(f"{path}: abscissae must be strictly increasing")
    slopes = np.diff(fs) / np.diff(ts)

    def ev(t):
        t = np.asarray(t, dtype=np.float64)
        inner = np.interp(t, ts, fs)
        lo = fs[0] + slopes[0] * (t - ts[0])
        hi = fs[-1] + slopes[-1] * (t - ts[-1])
        return np.where(t < ts[0], lo, np.where(t > ts[-1], hi, inner))

    def ld(t):
        t = np.asarray(t, dtype=np.float64)
        # left-side search puts an exact node hit in the segment ending there
        idx = np.clip(np.searchsorted(ts, t, side="left") - 1, 0,
                      slopes.shape[0] - 1)
        return slopes[idx]

    def prim(t):
        flat = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.array([_segment_integral(ts, fs, slopes, float(s))
                        for s in flat])
        return out.reshape(np.shape(t)) if np.ndim(t) else out[0]

    return Nonlinearity(name=f"table:{path}", eval=_scalar_ok(ev),
                        left_deriv=_scalar_ok(ld),
                        primitive_fn=_scalar_ok(prim))


def _segment_integral(ts, fs, slopes, t):
    """Integral of the extended piecewise-linear table from 0 to t."""
    def antideriv_at(x):
        # cumulative integral from ts[0] to x
        acc = 0.0
        if x < ts[0]:
            dx = x - ts[0]
            return fs[0] * dx + 0.5 * slopes[0] * dx * dx
        for i in range(slopes.shape[0]):
            right = min(x, ts[i + 1])
            dx = right - ts[i]
            acc += fs[i] * dx + 0.5 * slopes[i] * dx * dx
            if x <= ts[i + 1]:
                return acc
        dx = x - ts[-1]
        return acc + fs[-1] * dx + 0.5 * slopes[-1] * dx * dx
    return antideriv_at(t) - antideriv_at(0.0)


_SPEC_HELP = "exp | pow:p=<float> | affine:a=<float>,b=<float> | ramp | table:<csv-path>"


def parse_nonlinearity(spec):
    """Build a registry nonlinearity from its CLI spec string."""
    spec = spec.strip()
    if spec == "exp":
        return exponential()
    if spec == "ramp":
        return ramp()
    if spec.startswith("table:"):
        return tabulated(spec[len("table:"):])
    if spec.startswith("pow:"):
        kv = _parse_kv(spec[len("pow:"):], {"p"}, spec)
        return shifted_power(kv["p"])
    if spec.startswith("affine:"):
        kv = _parse_kv(spec[len("affine:"):], {"a", "b"}, spec)
        return affine(kv["a"], kv["b"])
    raise ValueError(f"unknown nonlinearity spec {spec!r}; expected {_SPEC_HELP}")


def _parse_kv(body, required, spec):
    out = {}
    for part in body.split(","):
        if "=" not in part:
            raise ValueError(f"malformed nonlinearity spec {spec!r}")
        key, val = part.split("=", 1)
        out[key.strip()] = float(val)
    missing = required - out.keys()
    extra = out.keys() - required
    if missing or extra:
        raise ValueError(
            f"nonlinearity spec {spec!r}: expected keys {sorted(required)}")
    return out
