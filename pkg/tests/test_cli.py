import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from stable_lab.cli import extract_series, main, run_experiment
from stable_lab.config import (
    ConfigError, apply_overrides, config_dict, load_config, parse_config,
    render_config, validate,
)

STAB_INI = """\
[experiment]
name = stability

[domain]
n = 2
radius = 1.0
h = 0.0625

[nonlinearity]
f = affine:a=0,b=4

[solution]
source = catalog:manufactured:quadratic,n=2
"""

HOLDER_INI = """\
[experiment]
name = holder

[domain]
n = 2
radius = 1.0
h = 0.015625

[solution]
source = catalog:manufactured:power:0.5,n=2

[holder]
radius = 0.5
levels = 3
"""


def _runner():
    return CliRunner()


def _invoke(tmp_path, args, **env):
    full_env = {"STABLE_LAB_OUT": str(tmp_path / "out"),
                "STABLE_LAB_BACKEND": "numpy"}
    full_env.update(env)
    return _runner().invoke(main, args, env=full_env, catch_exceptions=False)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_parse_config_minimal():
    cfg = parse_config(STAB_INI)
    assert cfg.experiment == "stability"
    assert cfg.n == 2
    assert cfg.h == 0.0625
    assert cfg.f == "affine:a=0,b=4"
    assert cfg.seed == 0  # default
    validate(cfg)


def test_parse_config_unknown_key_lists_known_ones():
    bad = STAB_INI.replace("radius = 1.0", "radius = 1.0\nwidth = 3")
    with pytest.raises(ConfigError, match="width") as exc:
        parse_config(bad)
    assert "radius" in str(exc.value)  # diagnostic names the known keys


def test_parse_config_unknown_section():
    with pytest.raises(ConfigError, match="physics"):
        parse_config(STAB_INI + "\n[physics]\nc = 3e8\n")


def test_validate_catches_missing_requirements():
    # parse_config validates eagerly: requireds are checked on the spot
    with pytest.raises(ConfigError, match="domain.n"):
        parse_config("[experiment]\nname = stability\n")


def test_apply_overrides():
    cfg = parse_config(STAB_INI)
    out = apply_overrides(cfg, ("domain.h=0.125", "experiment.seed=3"))
    assert out.h == 0.125
    assert out.seed == 3
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ("domain.h",))  # missing '='
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ("domain.nope=1",))


def test_render_parse_roundtrip():
    cfg = validate(parse_config(STAB_INI))
    text = render_config(cfg)
    again = parse_config(text)
    assert again == cfg
    # JSON echo stays serializable
    json.dumps(config_dict(cfg))


# ---------------------------------------------------------------------------
# run_experiment plumbing (no subprocess)
# ---------------------------------------------------------------------------

def test_run_experiment_stability(tmp_path, monkeypatch):
    monkeypatch.setenv("STABLE_LAB_OUT", str(tmp_path))
    cfg = validate(parse_config(STAB_INI))
    code, path = run_experiment(cfg)
    assert code == 0
    report = json.loads(Path(path).read_text())
    assert report["summary"] == "pass"
    assert report["checks"][0]["name"] == "stability"
    assert report["checks"][0]["verdict"] == "stable"
    assert "wall_clock_seconds" in report


def test_run_experiment_unstable_exits_one(tmp_path, monkeypatch):
    monkeypatch.setenv("STABLE_LAB_OUT", str(tmp_path))
    text = STAB_INI.replace("affine:a=0,b=4", "affine:a=30,b=1")
    text = text.replace("source = catalog:manufactured:quadratic,n=2",
                        "source = newton-oracle")
    cfg = validate(parse_config(text))
    code, path = run_experiment(cfg)
    assert code == 1
    report = json.loads(Path(path).read_text())
    assert report["summary"] == "fail"
    assert report["checks"][0]["verdict"] == "unstable"


def test_run_experiment_error_payload(tmp_path, monkeypatch):
    monkeypatch.setenv("STABLE_LAB_OUT", str(tmp_path))
    # a malformed nonlinearity spec surfaces at run time as a typed error
    cfg = validate(parse_config(STAB_INI))
    cfg = apply_overrides(cfg, ("nonlinearity.f=affine:a=0",))
    code, path = run_experiment(cfg)
    assert code == 2
    report = json.loads(Path(path).read_text())
    assert report["summary"] == "error"
    assert report["error"]["code"] == "invalid-input"


# ---------------------------------------------------------------------------
# the click surface
# ---------------------------------------------------------------------------

def test_cli_run_pass(tmp_path):
    cfgfile = tmp_path / "stab.ini"
    cfgfile.write_text(STAB_INI)
    res = _invoke(tmp_path, ["run", str(cfgfile)])
    assert res.exit_code == 0, res.output
    assert res.output.startswith("pass")
    report_path = res.output.split("-> ")[1].strip()
    doc = json.loads(Path(report_path).read_text())
    assert doc["summary"] == "pass"


def test_cli_run_override(tmp_path):
    cfgfile = tmp_path / "stab.ini"
    cfgfile.write_text(STAB_INI)
    res = _invoke(tmp_path, ["run", str(cfgfile), "--set", "domain.h=0.125"])
    assert res.exit_code == 0, res.output
    report_path = res.output.split("-> ")[1].strip()
    doc = json.loads(Path(report_path).read_text())
    assert doc["config"]["h"] == 0.125


def test_cli_run_malformed_config(tmp_path):
    cfgfile = tmp_path / "bad.ini"
    cfgfile.write_text("[experiment]\nname = impossible\n")
    res = _invoke(tmp_path, ["run", str(cfgfile)])
    assert res.exit_code == 2
    assert "ERROR" in res.output


def test_cli_catalog_list(tmp_path):
    res = _invoke(tmp_path, ["catalog", "list"])
    assert res.exit_code == 0
    lines = [l for l in res.output.strip().splitlines() if l]
    # header plus 21 entries
    assert len(lines) == 22
    assert "gelfand:n=3" in res.output
    assert "manufactured:quadratic,n=2" in res.output


def test_cli_sweep_matrix(tmp_path):
    res = _invoke(tmp_path, ["sweep-matrix", "--trials", "2000",
                             "--seed", "7", "--dims", "2..3"])
    assert res.exit_code == 0, res.output
    assert "n=2" in res.output and "n=3" in res.output


def test_cli_plot_roundtrip(tmp_path):
    cfgfile = tmp_path / "hold.ini"
    cfgfile.write_text(HOLDER_INI)
    res = _invoke(tmp_path, ["run", str(cfgfile)])
    assert res.exit_code == 0, res.output
    report_path = res.output.split("-> ")[1].strip()

    res2 = _invoke(tmp_path, ["plot", report_path, "holder"])
    assert res2.exit_code == 0, res2.output
    dat = Path(res2.output.strip().splitlines()[-1])
    assert dat.exists()
    rows = [l.split() for l in dat.read_text().splitlines()
            if l and not l.startswith("#")]
    assert len(rows) >= 3

    res3 = _invoke(tmp_path, ["plot", report_path, "nonexistent-series"])
    assert res3.exit_code == 2


def test_cli_run_file_source(tmp_path):
    from stable_lab.catalog import manufactured, sample_to_grid
    from stable_lab.grid import build_ball_domain, save_field
    d = build_ball_domain(2, np.zeros(2), 1.0, 1 / 16)
    u = sample_to_grid(manufactured("quadratic", 2), d)
    field_path = tmp_path / "u.bin"
    save_field(u, field_path)
    text = STAB_INI.replace("source = catalog:manufactured:quadratic,n=2",
                            f"source = file:{field_path}")
    cfgfile = tmp_path / "file.ini"
    cfgfile.write_text(text)
    res = _invoke(tmp_path, ["run", str(cfgfile)])
    assert res.exit_code == 0, res.output


def test_extract_series_unknown_raises():
    with pytest.raises(KeyError, match="available"):
        extract_series({"series": {"holder": []}}, "bogus")
