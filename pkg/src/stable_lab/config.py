"""Experiment configuration: an INI dialect with strict key checking.

A config is a committable artifact, so parsing is deliberately unforgiving:
unknown sections or keys raise ``ConfigError`` instead of being ignored, and
``render`` writes a canonical form whose re-parse reproduces the config
exactly (floats go through ``repr``, which round-trips).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, asdict

EXPERIMENTS = ("approximate", "stability", "verify-estimates", "holder",
               "matrix-sweep", "catalog-check")

ESTIMATE_CHECKS = ("reversed-poincare", "identity-chain", "key-estimate",
                   "curvature", "hole-filling")

KEEP_CHOICES = ("none", "last", "all")


class ConfigError(Exception):
    """Malformed experiment configuration (unknown key, bad value, ...)."""


# section -> key -> (attribute, parse, render)
def _f(s):
    return float(s)


def _i(s):
    return int(s)


def _b(s):
    low = s.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(tok) for tok in s.split(",") if tok.strip())


def _strings(s):
    return tuple(tok.strip() for tok in s.split(",") if tok.strip())


def _dims(s):
    lo, sep, hi = s.partition("..")
    if not sep:
        raise ValueError(f"dimension range must look like 2..6, got {s!r}")
    return (int(lo), int(hi))


_id = str


def _render(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if len(v) == 2 and all(isinstance(x, int) for x in v):
            return f"{v[0]}..{v[1]}"
        return ", ".join(repr(x) if isinstance(x, float) else str(x)
                         for x in v)
    return str(v)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    output: str | None = None
    seed: int = 0
    # [domain]
    n: int | None = None
    radius: float | None = None
    h: float | None = None
    center: tuple | None = None
    # [nonlinearity]
    f: str | None = None
    # [solution]
    source: str | None = None
    boundary: float = 0.0
    lam: float = 1.0
    cap: float | None = None
    # [schedule]
    epsilons: tuple | None = None
    levels: int | None = None
    keep: str = "last"
    # [tolerances]
    fixed_point_tol: float | None = None
    stability_tol: float | None = None
    # [holder]
    x0: tuple | None = None
    fit_radius: float | None = None
    fit_levels: int = 4
    # [sweep]
    trials: int = 1000000
    dims: tuple = (2, 6)
    # [catalog]
    target: str | None = None
    # [estimates]
    checks: tuple = ESTIMATE_CHECKS
    refine: bool = False


# The INI schema. Every key maps to one dataclass attribute.
_SCHEMA = {
    "experiment": {"name": ("experiment", _id),
                   "output": ("output", _id),
                   "seed": ("seed", _i)},
    "domain": {"n": ("n", _i), "radius": ("radius", _f), "h": ("h", _f),
               "center": ("center", _floats)},
    "nonlinearity": {"f": ("f", _id)},
    "solution": {"source": ("source", _id), "boundary": ("boundary", _f),
                 "lam": ("lam", _f), "cap": ("cap", _f)},
    "schedule": {"epsilons": ("epsilons", _floats),
                 "levels": ("levels", _i),
                 "keep": ("keep", _id)},
    "tolerances": {"fixed_point": ("fixed_point_tol", _f),
                   "stability": ("stability_tol", _f)},
    "holder": {"x0": ("x0", _floats), "radius": ("fit_radius", _f),
               "levels": ("fit_levels", _i)},
    "sweep": {"trials": ("trials", _i), "dims": ("dims", _dims)},
    "catalog": {"target": ("target", _id)},
    "estimates": {"checks": ("checks", _strings), "refine": ("refine", _b)},
}

_REQUIRED = {
    "approximate": ("n", "radius", "h", "f", "source"),
    "stability": ("n", "radius", "h", "f", "source"),
    "verify-estimates": ("n", "radius", "h", "f", "source"),
    "holder": ("n", "radius", "h", "source", "fit_radius"),
    "matrix-sweep": (),
    "catalog-check": ("target",),
}


def _parser():
    p = configparser.ConfigParser(interpolation=None)
    p.optionxform = str  # keys are case-sensitive; typos must not fold away
    return p


def parse_config(text, origin="<config>"):
    """Parse INI text into an ExperimentConfig; unknown keys are errors."""
    p = _parser()
    try:
        p.read_string(text, source=origin)
    except configparser.Error as e:
        raise ConfigError(f"{origin}: {e}") from e
    values = {}
    for section in p.sections():
        schema = _SCHEMA.get(section)
        if schema is None:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        for key, raw in p.items(section):
            if key not in schema:
                known = ", ".join(sorted(schema))
                raise ConfigError(
                    f"{origin}: unknown key {key!r} in [{section}] "
                    f"(known: {known})")
            attr, conv = schema[key]
            try:
                values[attr] = conv(raw)
            except ValueError as e:
                raise ConfigError(
                    f"{origin}: bad value for {section}.{key}: {e}") from e
    if "experiment" not in values:
        raise ConfigError(f"{origin}: missing experiment.name")
    return validate(ExperimentConfig(**values), origin)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), origin=str(path))


def validate(cfg, origin="<config>"):
    """Check cross-field consistency; returns the config unchanged."""
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(
            f"{origin}: unknown experiment {cfg.experiment!r} "
            f"(one of: {', '.join(EXPERIMENTS)})")
    for attr in _REQUIRED[cfg.experiment]:
        if getattr(cfg, attr) is None:
            raise ConfigError(
                f"{origin}: experiment {cfg.experiment!r} needs "
                f"{_section_key(attr)}")
    if cfg.keep not in KEEP_CHOICES:
        raise ConfigError(f"{origin}: schedule.keep must be one of "
                          f"{', '.join(KEEP_CHOICES)}")
    for c in cfg.checks:
        if c not in ESTIMATE_CHECKS:
            raise ConfigError(
                f"{origin}: unknown estimate check {c!r} "
                f"(one of: {', '.join(ESTIMATE_CHECKS)})")
    if cfg.n is not None and not 2 <= cfg.n <= 5:
        raise ConfigError(f"{origin}: domain.n must be 2..5, got {cfg.n}")
    if cfg.h is not None and cfg.radius is not None and cfg.h >= cfg.radius:
        raise ConfigError(f"{origin}: domain.h must be below domain.radius")
    if cfg.dims[0] < 2 or cfg.dims[1] < cfg.dims[0]:
        raise ConfigError(f"{origin}: sweep.dims must be lo..hi with lo >= 2")
    if cfg.trials < 1:
        raise ConfigError(f"{origin}: sweep.trials must be positive")
    return cfg


def _section_key(attr):
    for section, keys in _SCHEMA.items():
        for key, (a, _) in keys.items():
            if a == attr:
                return f"{section}.{key}"
    raise KeyError(attr)


def apply_overrides(cfg, pairs):
    """Apply ``SECTION.KEY=VALUE`` strings on top of a parsed config."""
    updates = {}
    for pair in pairs:
        head, sep, raw = pair.partition("=")
        if not sep:
            raise ConfigError(f"override must look like section.key=value, "
                              f"got {pair!r}")
        section, dot, key = head.strip().partition(".")
        schema = _SCHEMA.get(section)
        if not dot or schema is None or key not in schema:
            raise ConfigError(f"unknown override target {head.strip()!r}")
        attr, conv = schema[key]
        try:
            updates[attr] = conv(raw.strip())
        except ValueError as e:
            raise ConfigError(f"bad override value for {head.strip()}: {e}")
    merged = {**asdict(cfg), **updates}
    return validate(ExperimentConfig(**merged))


_DEFAULTS = ExperimentConfig(experiment="stability")


def render_config(cfg):
    """Canonical INI text; ``parse_config(render_config(c)) == c``."""
    out = []
    for section, keys in _SCHEMA.items():
        lines = []
        for key, (attr, _) in keys.items():
            v = getattr(cfg, attr)
            if v is None:
                continue
            if attr != "experiment" and v == getattr(_DEFAULTS, attr):
                continue
            lines.append(f"{key} = {_render(v)}")
        if lines:
            out.append(f"[{section}]")
            out.extend(lines)
            out.append("")
    return "\n".join(out)


def config_dict(cfg):
    """JSON-ready echo of the config (tuples become lists)."""
    d = asdict(cfg)
    return {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in d.items()}
