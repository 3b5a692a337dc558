"""CLI: config validation, artifacts, exit codes, rerun determinism."""

import json
import os

import pytest

from kolmsim import cli, experiments
from kolmsim.errors import ConfigError

OU_CFG = {
    "experiment": "ou_sanity",
    "system": {"lam": 0.5, "q": 0.2, "n_vars": 1},
    "initial_point": [1.0],
    "times": {"t_max": 2.0, "n_points": 5},
    "mc": {"samples": 4000, "dt": 0.002},
    "seed": 3,
}

BQP_CFG = {
    "experiment": "bqp_circuit",
    "circuits": {"count": 4, "qubits": 2, "gates": 3, "max_arity": 2},
    "system": {"lam": 0.1, "q": 0.1},
    "time": 1.0,
    "seed": 7,
}

AUDITS_CFG = {
    "experiment": "audits",
    "system": {"kind": "bounded_oscillator", "lam": 0.1, "q": 0.1},
    "basis": {"order": 4},
    "regularization": {"r_values": [0.4], "r_reference": 0.8, "t": 2.0},
    "smoothing_times": [0.5, 1.0],
    "seed": 0,
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_validate_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        experiments.validate_config({**OU_CFG, "extra": 1})
    with pytest.raises(ConfigError):
        experiments.validate_config(
            {**OU_CFG, "system": {"lam": 0.5, "q": 0.2, "n_vars": 1, "zeta": 2}})


def test_validate_rejects_unknown_experiment():
    with pytest.raises(ConfigError):
        experiments.validate_config({"experiment": "warp_drive"})


def test_run_ou_writes_artifacts(tmp_path):
    cfg_path = write_cfg(tmp_path, OU_CFG)
    out = tmp_path / "out"
    assert cli.main(["run", cfg_path, "--out", str(out)]) == 0
    for name in ("mc_curve.csv", "galerkin_curve.csv", "comparison.csv",
                 "audit.json", "manifest.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"] == OU_CFG
    assert manifest["seed"] == 3
    assert "kolmsim" in manifest["versions"]


def test_rerun_is_bit_identical(tmp_path):
    cfg_path = write_cfg(tmp_path, OU_CFG)
    out1, out2, out3 = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert cli.main(["run", cfg_path, "--out", str(out1)]) == 0
    assert cli.main(["run", cfg_path, "--out", str(out2)]) == 0
    # estimates must not depend on the worker thread count either
    assert cli.main(["run", cfg_path, "--out", str(out3), "--threads", "2"]) == 0
    for name in ("mc_curve.csv", "comparison.csv", "galerkin_curve.csv",
                 "manifest.json", "audit.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
    for name in ("mc_curve.csv", "comparison.csv", "galerkin_curve.csv"):
        assert (out1 / name).read_bytes() == (out3 / name).read_bytes(), name


def test_seed_override_changes_estimates(tmp_path):
    cfg_path = write_cfg(tmp_path, OU_CFG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", cfg_path, "--out", str(out1)]) == 0
    assert cli.main(["run", cfg_path, "--out", str(out2), "--seed", "99"]) == 0
    assert (out1 / "mc_curve.csv").read_text() != (out2 / "mc_curve.csv").read_text()
    manifest = json.loads((out2 / "manifest.json").read_text())
    assert manifest["seed"] == 99


def test_bqp_run_reports_identity(tmp_path):
    cfg_path = write_cfg(tmp_path, BQP_CFG)
    out = tmp_path / "out"
    assert cli.main(["run", cfg_path, "--out", str(out)]) == 0
    audit = json.loads((out / "audit.json").read_text())
    assert audit["bqp"]["worst_identity_gap"] <= 1e-9
    assert audit["bqp"]["bound_satisfied"] is True


def test_audit_command(tmp_path):
    cfg_path = write_cfg(tmp_path, AUDITS_CFG)
    out = tmp_path / "out"
    assert cli.main(["audit", cfg_path, "--out", str(out)]) == 0
    audit = json.loads((out / "audit.json").read_text())
    assert audit["passed"] is True
    assert audit["regularization"]["rows"][0]["passed"] is True


def test_audit_command_requires_audits_experiment(tmp_path):
    cfg_path = write_cfg(tmp_path, OU_CFG)
    assert cli.main(["audit", cfg_path]) == cli.EXIT_CONFIG


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"experiment": "oscillator", "bogus": 1}')
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    missing = tmp_path / "missing.json"
    assert cli.main(["run", str(missing), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    notjson = tmp_path / "notjson.json"
    notjson.write_text("not json {")
    assert cli.main(["run", str(notjson), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_numerical_error_exit_code(tmp_path):
    cfg = {**OU_CFG, "times": {"t_max": 0.25, "n_points": 2},
           "mc": {"samples": 500, "dt": 0.1}}  # 0.25 not on the 0.1 lattice
    cfg_path = write_cfg(tmp_path, cfg)
    assert cli.main(["run", cfg_path, "--out", str(tmp_path / "o")]) \
        == cli.EXIT_NUMERICAL


def test_audit_failure_exit_code(tmp_path, monkeypatch):
    def failing_audit(*args, **kwargs):
        return {"passed": False, "operators": {"linear": {"passed": False}}}

    monkeypatch.setitem(experiments.RUNNERS, "audits",
                        lambda cfg, out, seed, threads: failing_audit())
    cfg_path = write_cfg(tmp_path, AUDITS_CFG)
    assert cli.main(["audit", cfg_path, "--out", str(tmp_path / "o")]) == cli.EXIT_AUDIT


def test_repo_example_configs_validate():
    root = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
    names = os.listdir(root)
    assert len(names) >= 4
    for name in names:
        experiments.load_config(os.path.join(root, name))
