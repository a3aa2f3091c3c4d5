"""Command-line front end: config-driven experiments, reproducible reports.

Every run writes a ``report.json`` whose content is a pure function of the
config and seed (one wall-clock key excepted), so refinement tables can be
compared across machines byte for byte. Exit status: 0 all checks passed,
1 at least one mandatory check failed, 2 configuration or numerical error.
"""

import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .approximation import (
    MonotonicityViolation,
    approximate,
    check_claims,
    make_parameters,
    newton_oracle,
    save_trace,
)
from .catalog import default_entries, parse_catalog_name, sample_to_grid
from .config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    config_dict,
    load_config,
    validate,
)
from .elliptic_solver import IndefiniteShift, ShiftedProblem, solve_shifted
from .estimates import (
    CSV_HEADER,
    DegenerateFit,
    OriginResolution,
    UnstableInput,
    holder_fit,
    matrix_inequality_sweep,
    observed_order,
    verify_geometric_inequality,
    verify_hole_filling,
    verify_identity_chain,
    verify_key_estimate,
    verify_sternberg_zumbrun,
)
from .grid import build_ball_domain, grid_field, load_field, test_field
from .nonlinearity import NonLipschitz, parse_nonlinearity, scaled
from .stability import EigenNonConvergence, is_stable, smallest_eigenvalue
from .approximation import admissible_radius

MANDATORY = {"reversed-poincare-inequality", "weighted-cutoff-inequality",
             "divergence-identity", "radial-projection-inequality",
             "weighted-key-estimate", "level-set-curvature-inequality"}

_ERROR_CODES = (
    (ConfigError, "config-error"),
    (EigenNonConvergence, "eigen-non-convergence"),
    (MonotonicityViolation, "monotonicity-violation"),
    (UnstableInput, "unstable-input"),
    (OriginResolution, "origin-resolution"),
    (DegenerateFit, "degenerate-fit"),
    (IndefiniteShift, "indefinite-shift"),
    (NonLipschitz, "non-lipschitz"),
)


def _error_code(exc):
    for cls, code in _ERROR_CODES:
        if isinstance(exc, cls):
            return code
    return "invalid-input" if isinstance(exc, ValueError) else "internal-error"


def _output_dir(cfg, config_path=None):
    root = os.environ.get("STABLE_LAB_OUT", ".")
    if cfg.output:
        return cfg.output if os.path.isabs(cfg.output) else os.path.join(
            root, cfg.output)
    stem = Path(config_path).stem if config_path else cfg.experiment
    return os.path.join(root, stem)


def _write_report(outdir, report):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _build_domain(cfg):
    return build_ball_domain(cfg.n, cfg.center, cfg.radius, cfg.h)


def _resolve_solution(cfg, domain):
    """The field under test: catalog sample, saved field, or Newton solve."""
    src = cfg.source
    if src.startswith("catalog:"):
        rs = parse_catalog_name(src[len("catalog:"):])
        if rs.n != domain.dim:
            raise ConfigError(
                f"catalog entry {rs.name} lives in dimension {rs.n}, "
                f"domain has n = {domain.dim}")
        return sample_to_grid(rs, domain, cap=cfg.cap), rs
    if src.startswith("file:"):
        u = load_field(src[len("file:"):])
        if u.domain.dim != domain.dim or u.domain.spacing != domain.spacing:
            raise ConfigError(
                f"field file domain (n={u.domain.dim}, h={u.domain.spacing}) "
                f"does not match the [domain] section")
        return u, None
    if src == "newton-oracle":
        f = parse_nonlinearity(cfg.f)
        u, info = newton_oracle(domain, f, g=cfg.boundary, lam=cfg.lam)
        if not info["converged"]:
            raise ValueError(
                f"newton oracle stalled at residual {info['residual']:.3e}")
        return u, None
    raise ConfigError(
        f"solution.source must be catalog:<name>, file:<path>, or "
        f"newton-oracle, got {src!r}")


def _schedule(cfg):
    if cfg.epsilons is not None:
        return cfg.epsilons
    if cfg.levels is not None:
        return tuple(0.5 ** k for k in range(1, cfg.levels + 1))
    return None


# ---------------------------------------------------------------------------
# experiment runners: each returns (payload dict, exit code)
# ---------------------------------------------------------------------------

def _run_approximate(cfg, outdir):
    # the iteration has no separate multiplier: lam folds into f itself
    f = scaled(parse_nonlinearity(cfg.f), cfg.lam)
    domain = _build_domain(cfg)
    u, _ = _resolve_solution(cfg, domain)
    params = make_parameters(f, cfg.n, r0=cfg.radius,
                             epsilon_schedule=_schedule(cfg),
                             fixed_point_tol=cfg.fixed_point_tol)
    trace = approximate(u, f, domain, params=params)
    trace_path = save_trace(trace, outdir, keep=cfg.keep)
    with open(trace_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)["files"]
    names = ["trace.json"]
    stack = list(manifest.values())
    while stack:  # manifest values are names or (nested) lists of names
        item = stack.pop()
        names.append(item) if isinstance(item, str) else stack.extend(item)
    claims = check_claims(trace)
    payload = {
        "checks": [{"name": name, "verdict": "pass" if sec["passed"] else
                    "fail"}
                   for name, sec in claims.items()
                   if isinstance(sec, dict) and "passed" in sec],
        "claims": claims,
        "series": {"trace": {"epsilon": list(trace.epsilons),
                             "distance": list(trace.distances)}},
        "trace_files": sorted(names),
        "summary": "pass" if claims["passed"] else "fail",
    }
    return payload, 0 if claims["passed"] else 1


def _run_stability(cfg, outdir):
    f = scaled(parse_nonlinearity(cfg.f), cfg.lam)
    domain = _build_domain(cfg)
    u, _ = _resolve_solution(cfg, domain)
    verdict = is_stable(u, f, tol=cfg.stability_tol)
    ok = verdict.verdict != "unstable"
    payload = {
        "checks": [{"name": "stability", **verdict.as_dict()}],
        "summary": "pass" if ok else "fail",
    }
    return payload, 0 if ok else 1


def _default_test_fields(domain):
    R = domain.radius
    c = domain.center

    def cone(x):
        return np.maximum(1.0 - np.sqrt(((x - c) ** 2).sum(-1)) / R, 0.0)

    def narrow(x):
        return np.maximum(1.0 - 2.0 * np.sqrt((x ** 2).sum(-1)) / R, 0.0)

    def bump(x):
        s = np.sqrt((x ** 2).sum(-1)) / R
        return np.maximum((s - 0.2) * (0.8 - s), 0.0) ** 2

    return (test_field(domain, cone), test_field(domain, narrow),
            test_field(domain, bump))


def _run_verify_estimates(cfg, outdir):
    f = scaled(parse_nonlinearity(cfg.f), cfg.lam)
    domain = _build_domain(cfg)
    u, rs = _resolve_solution(cfg, domain)
    zeta, eta, phi = _default_test_fields(domain)
    centered = bool(np.allclose(domain.center, 0.0))
    reports, skipped, vacuous = [], [], False

    def run_check(fn):
        nonlocal vacuous
        try:
            out = fn()
        except UnstableInput as e:
            vacuous = True
            out = e.report
        reports.extend(out if isinstance(out, list) else [out])

    for check in cfg.checks:
        if check == "reversed-poincare":
            run_check(lambda: verify_sternberg_zumbrun(u, f, zeta))
        elif check == "identity-chain":
            if not centered:
                skipped.append({"name": check,
                                "reason": "domain not origin-centered"})
                continue
            run_check(lambda: verify_identity_chain(u, f, eta))
        elif check == "key-estimate":
            if not centered or not 3 <= domain.dim <= 5:
                skipped.append({"name": check,
                                "reason": "needs origin-centered domain "
                                          "with 3 <= n <= 5"})
                continue
            run_check(lambda: verify_key_estimate(u, f, phi))
        elif check == "curvature":
            reports.append(verify_geometric_inequality(u))
        elif check == "hole-filling":
            if not centered:
                skipped.append({"name": check,
                                "reason": "domain not origin-centered"})
                continue
            reports.append(verify_hole_filling(u, domain.radius / 4.0))

    payload = {"checks": [r.as_dict() for r in reports]}
    if skipped:
        payload["skipped"] = skipped
    if vacuous:
        payload["hypothesis_holds"] = False

    if cfg.refine and rs is not None:
        fine = build_ball_domain(cfg.n, cfg.center, cfg.radius, cfg.h / 2.0)
        u2 = sample_to_grid(rs, fine, cap=cfg.cap)
        eta2 = _default_test_fields(fine)[1]
        coarse_rep = next(r for r in reports
                          if r.name == "divergence-identity")
        fine_rep = verify_identity_chain(u2, f, eta2)[1]
        payload["refinement"] = {
            "series": [[domain.spacing, abs(coarse_rep.margin)],
                       [fine.spacing, abs(fine_rep.margin)]],
            "order": observed_order(coarse_rep, fine_rep),
        }
    elif cfg.refine:
        raise ConfigError("refine = true needs a resamplable solution "
                          "(catalog:<name> source)")

    failed = [r for r in reports
              if r.name in MANDATORY and r.verdict == "fail"]
    payload["summary"] = "fail" if (failed and not vacuous) else "pass"

    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "estimates.csv"), "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in reports:
            fh.write(r.csv_row() + "\n")
    return payload, 0 if payload["summary"] == "pass" else 1


def _run_holder(cfg, outdir):
    domain = _build_domain(cfg)
    u, _ = _resolve_solution(cfg, domain)
    x0 = np.asarray(cfg.x0, dtype=np.float64) if cfg.x0 is not None \
        else np.zeros(domain.dim)
    rep = holder_fit(u, x0, cfg.fit_radius, cfg.fit_levels)
    osc = rep.extras["oscillations"]
    payload = {
        "checks": [rep.as_dict()],
        "series": {"holder": {"k": list(range(len(osc))),
                              "log2_osc": [float(np.log2(o)) for o in osc]}},
        "summary": "pass" if rep.verdict == "pass" else "fail",
    }
    return payload, 0 if rep.verdict == "pass" else 1


def _run_matrix_sweep(cfg, outdir):
    rows = []
    ok = True
    for n in range(cfg.dims[0], cfg.dims[1] + 1):
        worst = matrix_inequality_sweep(cfg.trials, n, seed=cfg.seed)
        good = worst >= -1e-9
        ok = ok and good
        rows.append({"n": n, "trials": cfg.trials, "min_margin": worst,
                     "verdict": "pass" if good else "fail"})
    payload = {"checks": rows, "summary": "pass" if ok else "fail"}
    return payload, 0 if ok else 1


def _run_catalog_check(cfg, outdir):
    from .catalog import classify_regularity
    from .nonlinearity import left_derivative
    from .stability import (_DEFAULT_POINCARE_SPACING,
                            radial_smallest_eigenvalue)

    rs = parse_catalog_name(cfg.target)
    checks = []

    worst = float(np.max(np.abs(rs.residual(_residual_grid(rs)))
                         / rs.residual_scale(_residual_grid(rs))))
    checks.append({"name": "radial-residual", "value": worst,
                   "verdict": "pass" if worst <= 1e-8 else "fail"})

    measured = classify_regularity(rs)
    checks.append({"name": "regularity-class", "value": measured,
                   "declared": rs.regularity_class,
                   "verdict": "pass" if measured == rs.regularity_class
                   else "fail"})

    if rs.f is not None and rs.f.left_deriv is not None:
        def V(r):
            return -rs.lam * np.asarray(
                rs.f.left_deriv(rs.profile(np.asarray(r))))
        lam1 = radial_smallest_eigenvalue(rs.n, V)
        band = 0.05 * (1.0 + abs(lam1))
        sign = ("marginal" if abs(lam1) <= band
                else "stable" if lam1 > 0 else "unstable")
        declared = rs.expected_stability
        if declared == "dimension_dependent":
            # singular exponential profile: Hardy says stable iff n >= 10
            declared = "stable" if rs.n >= 10 else "unstable"
        agree = declared is None or sign == declared
        checks.append({"name": "radial-stability", "lambda1": lam1,
                       "measured": sign, "declared": declared,
                       "verdict": "pass" if agree else "fail"})

    if rs.f is not None and 2 <= rs.n <= 5:
        g = scaled(rs.f, rs.lam)
        r_star = admissible_radius(g, rs.n)
        A = rs.lam * left_derivative(rs.f, 1.0)
        h = r_star * _DEFAULT_POINCARE_SPACING[rs.n]
        dom = build_ball_domain(rs.n, None, r_star, h)
        lam1 = smallest_eigenvalue(dom).lambda1
        ok = lam1 > 8.0 * (1.0 + A)
        rhs_val = rs.lam * float(rs.f(1.0)) - A   # -K of the base problem
        prob = ShiftedProblem(dom, A, grid_field(dom, lambda x: np.full(
            x.shape[:-1], rhs_val)), 0.0)
        sol, info = solve_shifted(prob)
        checks.append({"name": "radius-condition", "r_star": r_star,
                       "lambda1": lam1, "bound": 8.0 * (1.0 + A),
                       "solver_converged": bool(info.converged),
                       "verdict": "pass" if ok and info.converged
                       else "fail"})

    ok = all(c["verdict"] == "pass" for c in checks)
    payload = {"checks": checks, "summary": "pass" if ok else "fail"}
    return payload, 0 if ok else 1


def _residual_grid(rs):
    return np.linspace(1e-6 if rs.d2profile is not None else 2.2e-3,
                       1.0, 10000)


_RUNNERS = {
    "approximate": _run_approximate,
    "stability": _run_stability,
    "verify-estimates": _run_verify_estimates,
    "holder": _run_holder,
    "matrix-sweep": _run_matrix_sweep,
    "catalog-check": _run_catalog_check,
}


def run_experiment(cfg, config_path=None, emit_plot=False):
    """Run one experiment, write its report; returns (exit code, path)."""
    outdir = _output_dir(cfg, config_path)
    report = {"version": __version__, "config": config_dict(cfg)}
    t0 = time.perf_counter()
    try:
        payload, code = _RUNNERS[cfg.experiment](cfg, outdir)
        report.update(payload)
    except (ConfigError, EigenNonConvergence, MonotonicityViolation,
            UnstableInput, OriginResolution, DegenerateFit, IndefiniteShift,
            NonLipschitz, ValueError, OSError) as e:
        report["error"] = {"code": _error_code(e), "message": str(e)}
        report["summary"] = "error"
        code = 2
    report["wall_clock_seconds"] = time.perf_counter() - t0
    path = _write_report(outdir, report)
    if emit_plot and "error" not in report:
        names = list(report.get("series", {}))
        if "refinement" in report:
            names.append("refinement")
        for series in names:
            _emit_series(report, series, outdir)
    return code, path


def _run_one(args):
    path, overrides, keep, emit = args
    try:
        cfg = load_config(path)
        cfg = apply_overrides(cfg, overrides) if overrides else cfg
        if keep is not None:
            cfg = validate(replace(cfg, keep=keep))
    except ConfigError as e:
        click.echo(f"error: {e}", err=True)
        return 2, None
    return run_experiment(cfg, config_path=path, emit_plot=emit)


# ---------------------------------------------------------------------------
# plot data extraction
# ---------------------------------------------------------------------------

def _emit_series(report, series, outdir):
    """Write a named series as whitespace-separated numeric columns."""
    rows, columns = extract_series(report, series)
    path = os.path.join(outdir, f"{series}.dat")
    with open(path, "w") as fh:
        fh.write(f"# stable-lab {report.get('version', __version__)}\n")
        fh.write(f"# series: {series}; columns: {' '.join(columns)}\n")
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    return path


def extract_series(report, series):
    """Locate a plottable series in a report; returns (rows, column names)."""
    stored = report.get("series", {})
    if series == "holder" and "holder" in stored:
        s = stored["holder"]
        return list(zip(s["k"], s["log2_osc"])), ["k", "log2_osc"]
    if series == "trace" and "trace" in stored:
        s = stored["trace"]
        return list(zip(s["epsilon"], s["distance"])), \
            ["epsilon", "w12_distance"]
    if series == "refinement" and "refinement" in report:
        return [tuple(row) for row in report["refinement"]["series"]], \
            ["h", "residual"]
    available = sorted(set(stored)
                       | ({"refinement"} if "refinement" in report else set()))
    raise KeyError(
        f"series {series!r} not present in this report "
        f"(available: {', '.join(available) if available else 'none'})")


# ---------------------------------------------------------------------------
# click entry points
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(version=__version__, prog_name="stable-lab")
def main():
    """Numerical laboratory for stable solutions of -Delta u = f(u)."""


@main.command(name="run")
@click.argument("configs", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--jobs", default=1, show_default=True,
              help="Run configs in parallel worker processes.")
@click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VAL",
              help="Override a config value (repeatable).")
@click.option("--keep-iterates", type=click.Choice(["none", "last", "all"]),
              default=None, help="How many iterate fields to keep on disk.")
@click.option("--emit-plot-data", is_flag=True,
              help="Also write plottable .dat files for known series.")
def run_cmd(configs, jobs, overrides, keep_iterates, emit_plot_data):
    """Run the experiment described by each CONFIG file."""
    tasks = [(path, tuple(overrides), keep_iterates, emit_plot_data)
             for path in configs]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    worst = 0
    for (code, path), src in zip(results, configs):
        status = {0: "pass", 1: "FAIL", 2: "ERROR"}[code]
        where = path if path else "-"
        click.echo(f"{status:5s}  {src}  ->  {where}")
        worst = max(worst, code)
    sys.exit(worst)


@main.group()
def catalog():
    """Inspect the built-in solution catalog."""


@catalog.command(name="list")
def catalog_list():
    """Print the catalog: name, dimension, stability, regularity class."""
    click.echo(f"{'name':34s}  {'n':>2s}  {'stability':9s}  regularity")
    for rs in default_entries():
        stab = rs.expected_stability or "-"
        click.echo(f"{rs.name:34s}  {rs.n:2d}  {stab:9s}  "
                   f"{rs.regularity_class}")


@main.command(name="sweep-matrix")
@click.option("--trials", default=1000000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--dims", default="2..6", show_default=True,
              help="Dimension range lo..hi.")
@click.option("--out", type=click.Path(), default=None,
              help="Also write a report.json under this directory.")
def sweep_matrix(trials, seed, dims, out):
    """Random sweep of the trace/projection matrix inequality."""
    try:
        lo, _, hi = dims.partition("..")
        cfg = validate(ExperimentConfig(experiment="matrix-sweep",
                                        trials=trials, seed=seed,
                                        dims=(int(lo or 0), int(hi or 0)),
                                        output=out))
    except (ConfigError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    payload, code = _run_matrix_sweep(cfg, out)
    for row in payload["checks"]:
        click.echo(f"n={row['n']}  trials={row['trials']}  "
                   f"min-margin={row['min_margin']:.6e}  {row['verdict']}")
    if out is not None:
        report = {"version": __version__, "config": config_dict(cfg),
                  **payload, "wall_clock_seconds": 0.0}
        _write_report(out, report)
    sys.exit(code)


@main.command(name="plot")
@click.argument("report_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("series")
@click.option("--out", type=click.Path(), default=None,
              help="Output directory (default: next to the report).")
def plot(report_path, series, out):
    """Extract SERIES from a report as plottable two-column text."""
    with open(report_path, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    outdir = out if out is not None else os.path.dirname(
        os.path.abspath(report_path))
    try:
        path = _emit_series(report, series, outdir)
    except KeyError as e:
        click.echo(f"error: {e.args[0]}", err=True)
        sys.exit(2)
    click.echo(path)


if __name__ == "__main__":
    main()
