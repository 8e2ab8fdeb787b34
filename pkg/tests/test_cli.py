import json

import pytest
import yaml

from magstep import cli
from magstep.cli import RunConfig
from magstep.errors import ConfigError


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def _run(tmp_path, command, data=None, *extra):
    args = [command, "--out", str(tmp_path / "out")]
    cfg = dict(data or {})
    cfg.setdefault("cache_dir", str(tmp_path / "cache"))
    args += ["--config", _write(tmp_path, cfg)]
    return cli.main(args + list(extra))


def test_config_hash_deterministic():
    a = RunConfig.from_mapping({"a": [-0.5], "sweep": {"h": [1e-4]}, "eta": 0.125})
    b = RunConfig.from_mapping({"eta": 0.125, "sweep": {"h": [1e-4]}, "a": -0.5})
    assert a.canonical() == b.canonical() and a.hash() == b.hash()
    c = RunConfig.from_mapping({"a": -0.5, "cache_dir": "elsewhere"})
    assert c.hash() == RunConfig().hash()


@pytest.mark.parametrize("bad", [{"a": 0.2}, {"eta": 0.3}, {"model": "x"}, {"bogus": 1},
                                 {"curve": {"semi_major": 2}}, {"sweep": {"h": [-1.0]}},
                                 {"tolerances": {42: {}}}])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_mapping(bad)


def test_constants_and_cache(tmp_path, dg):
    assert _run(tmp_path, "constants", {"a": [-1.0, -0.5]}) == 0
    out = tmp_path / "out"
    first = (out / "constants.json").read_bytes()
    rec = json.loads(first)
    row = rec["outputs"]["edge"][0]
    assert abs(row["beta"] - dg.theta0) < 1e-5 and abs(row["zeta"] - dg.xi0) < 1e-5
    half = rec["outputs"]["edge"][1]
    assert 0.5 * dg.theta0 < half["beta"] < 0.5
    csv_text = (out / "constants.csv").read_text()
    assert csv_text.startswith(f"# schema=1 config={rec['config_hash']} command=constants\n")
    assert _run(tmp_path, "constants", {"a": [-1.0, -0.5]}) == 0
    assert (out / "constants.json").read_bytes() == first


def test_corrupted_cache_recomputed(tmp_path, caplog):
    data = {"a": [-0.5]}
    assert _run(tmp_path, "constants", data) == 0
    entry = next((tmp_path / "cache").glob("constants-*.json"))
    text = entry.read_text()
    entry.write_text(text.replace('"beta": 0.39', '"beta": 0.49', 1))
    assert cli.cache_load(entry) is None
    assert _run(tmp_path, "constants", data) == 0
    assert cli.cache_load(entry) is not None
    entry.write_text("{not json")
    assert cli.cache_load(entry) is None


def test_curve_command(tmp_path):
    assert _run(tmp_path, "curve") == 0
    rec = json.loads((tmp_path / "out" / "curve.json").read_text())
    assert abs(rec["outputs"]["gamma0"] - 0.6486) < 1e-4


def test_predict_columns(tmp_path):
    assert _run(tmp_path, "predict", {"sweep": {"h": [1e-4, 1e-5]}}) == 0
    lines = (tmp_path / "out" / "predict.csv").read_text().splitlines()
    assert lines[1] == "h,S_u,S_d,gap_predicted,phase"
    assert len(lines) == 4


def test_predict_neumann(tmp_path):
    assert _run(tmp_path, "predict", {"model": "neumann", "sweep": {"h": [1e-4]}}) == 0
    rec = json.loads((tmp_path / "out" / "predict.json").read_text())
    assert rec["outputs"]["model"] == "neumann"


def test_predict_transversal(tmp_path):
    data = {"model": "transversal", "curve": {"kind": "arc", "k0": 1.0, "amp": 0.5, "s_r": 1.0},
            "sweep": {"h": [0.01]}}
    assert _run(tmp_path, "predict", data) == 0


def test_circle_exit_code(tmp_path, capsys):
    data = {"curve": {"kind": "ellipse", "semi_major": 1.0, "semi_minor": 1.0}}
    assert _run(tmp_path, "predict", data) == cli.EXIT_VALIDATION
    assert "DegenerateCurvature" in capsys.readouterr().err


def test_numerical_exit_code(tmp_path):
    data = {"sweep": {"h": [1e-9, 1e-8, 1e-7]}}
    assert _run(tmp_path, "effective-gap", data) == cli.EXIT_NUMERICAL


def test_effective_gap(tmp_path):
    assert _run(tmp_path, "effective-gap") == 0
    rec = json.loads((tmp_path / "out" / "effective_gap.json").read_text())
    assert abs(rec["outputs"]["rel_err"]) < 0.05


def test_wkb_and_solve2d(tmp_path):
    data = {"curve": {"kind": "ellipse", "semi_major": 8.0, "semi_minor": 4.0},
            "grid": {"n_sigma": 48, "n_tau": 32}, "sweep": {"hbar": [0.1, 0.15]}}
    assert _run(tmp_path, "solve2d", data, "--jobs", "2") == 0
    rows = (tmp_path / "out" / "solve2d.csv").read_text().splitlines()
    assert rows[1] == "hbar,nu1,nu2,nu3,gap" and len(rows) == 4
    assert _run(tmp_path, "wkb-residual", data) == 0


def test_validate_tightened(tmp_path, capsys):
    # a tightened tolerance is reported as a failure, not a crash
    code = cli.main(["validate", "--skip-2d", "--out", str(tmp_path / "o"), "--config",
                     _write(tmp_path, {"cache_dir": str(tmp_path / "c"),
                                       "tolerances": {1: {"xi0_relation": 1e-30}}})])
    out = capsys.readouterr().out
    assert code == cli.EXIT_VALIDATION
    assert "criterion  1 FAIL" in out and "criterion 10 PASS" in out
    assert "criterion  9" not in out


def test_bad_jobs(tmp_path):
    assert cli.main(["curve", "--jobs", "0", "--out", str(tmp_path)]) == cli.EXIT_VALIDATION
