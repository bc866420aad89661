import csv
import json

import numpy as np
import pytest

from oscbath.cli import main
from oscbath.config import RunConfig, parse_range
from oscbath.errors import ConfigError


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_parse_range():
    assert len(parse_range("0.05:0.2:0.05")) == 4
    assert parse_range("0.05:0.2:0.05")[2] == 0.15
    assert list(parse_range("3")) == [3.0]
    for bad in ("1:0:0.1", "0:1:0", "a:b:c", "0:1"):
        with pytest.raises(ConfigError):
            parse_range(bad)


def test_config_validation(tmp_path):
    cfg = RunConfig.load(write(tmp_path / "c.json", {"beta": 2.0, "lambda": 0.05, "grid": {"n": 512}}))
    assert (cfg.beta, cfg.lam, cfg.grid_n, cfg.grid_r_max) == (2.0, 0.05, 512, 30.0)
    for bad in ({"beta": 0}, {"grid": {"n": 10}}, {"beta": "x"}, [1, 2]):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(bad)
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.json")


def test_malformed_config_exit_1(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"beta": 1.0,\n  "lambda": }')
    assert main(["verify", "--config", str(path)]) == 1
    err = capsys.readouterr().err
    assert "line 2 column" in err


def test_common_flags_before_subcommand(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{bad")
    out = tmp_path / "res.csv"
    assert main(["--config", str(path), "--seed", "7", "--out", str(out), "resonance"]) == 1
    meta = json.loads((tmp_path / "res.csv.meta.json").read_text())
    assert meta["status"] == "config-error"
    assert meta["seed"] == 7


def test_resonance_sweep(tmp_path):
    out = tmp_path / "res.csv"
    assert main(["resonance", "--lambda-sweep", "0.05:0.2:0.05", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["lambda", "re_kappa_hat", "im_kappa_hat", "residual", "q_norm"]
    assert len(rows) == 5
    assert [float(r[0]) for r in rows[1:]] == [0.05, 0.1, 0.15, 0.2]
    assert all(abs(float(r[4]) - 1) < 1e-5 for r in rows[1:])
    meta = json.loads((tmp_path / "res.csv.meta.json").read_text())
    assert meta["status"] == "ok" and meta["grid"]["n"] == 2000 and len(meta["config_hash"]) == 16
    assert meta["wall_time_s"] >= 0 and "max_resonance_residual" in meta["tolerances"]


def test_verify_identities_default(tmp_path):
    out = tmp_path / "ids.json"
    assert main(["verify", "--suite", "identities", "--trials", "20", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["passed"] and report["config_hash"]
    assert (tmp_path / "ids.json.meta.json").exists()


def test_verification_failure_exit_2(tmp_path):
    cfg = write(tmp_path / "c.json", {"form_factor": {"sigma": 1.0, "strip_half_width": 1.0}})
    assert main(["verify", "--suite", "form-factor", "--config", cfg, "--out",
                 str(tmp_path / "h.json")]) == 2
    assert not json.loads((tmp_path / "h.json").read_text())["passed"]


def test_correlate_deterministic(tmp_path):
    f1 = write(tmp_path / "f1.json", {"c": [0.3, 0.0], "f": {"kind": "gaussian", "sigma": 1.0, "amplitude": 0.2}})
    paths = []
    for k in range(2):
        out = tmp_path / f"c{k}.csv"
        assert main(["correlate", "--f1", f1, "--t", "0:5:0.5", "--out", str(out)]) == 0
        paths.append(out)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    rows = read_csv(paths[0])
    assert rows[0] == ["t", "re", "im", "abs_deviation"] and len(rows) == 12


def test_equilibrium_and_dyson(tmp_path):
    out = tmp_path / "eq.json"
    assert main(["equilibrium", "--t", "0:4:2", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["time_drift"] < 1e-10
    m = write(tmp_path / "m.json", {"atoms": [{"mu": 1.0, "w": [0.004, 0]}, {"mu": -1.0, "w": [0.004, 0]}]})
    out = tmp_path / "d.csv"
    assert main(["dyson", "--measure", m, "--order", "2", "--t", "0:2:1", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0][:3] == ["t", "re", "im"] and len(rows) == 4
    assert float(rows[1][1]) == pytest.approx(rep["omega"][0], rel=1e-12)


def test_bad_measure_exit_1(tmp_path):
    m = write(tmp_path / "m.json", {"atoms": [{"mu": 1.0, "w": [0.1, 0]}]})
    assert main(["dyson", "--measure", m, "--t", "0:1:1"]) == 1
