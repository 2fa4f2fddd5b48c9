import csv
import json

import pytest
import yaml

from bdie2d import cli
from bdie2d.errors import ConfigError


def _write_cfg(tmp_path, payload, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(payload))
    return str(path)


def test_default_config_has_documented_sections():
    cfg = cli.default_config()
    for key in ("case", "seed", "discretization", "solver", "tolerances",
                "source_override", "study", "conditioning", "output"):
        assert key in cfg


def test_load_config_merges_partial_override(tmp_path):
    path = _write_cfg(tmp_path, {"discretization": {"n_boundary": 32}})
    cfg = cli.load_config(path)
    assert cfg["discretization"]["n_boundary"] == 32
    assert cfg["case"] == "laplace-dipole"


def test_unknown_key_rejected(tmp_path):
    path = _write_cfg(tmp_path, {"meshiness": 3})
    with pytest.raises(ConfigError):
        cli.load_config(path)
    path = _write_cfg(tmp_path, {"solver": {"tolerance": 1e-8}})
    with pytest.raises(ConfigError):
        cli.load_config(path)


def test_invalid_yaml_rejected(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("a: [unterminated\n")
    with pytest.raises(ConfigError):
        cli.load_config(str(path))


def test_missing_config_file_exits_with_config_status(tmp_path):
    status = cli.main(["solve", "--config", str(tmp_path / "absent.yaml"),
                       "--out", str(tmp_path / "out")])
    assert status == cli.EXIT_CONFIG


def test_solve_command_writes_reports(tmp_path):
    path = _write_cfg(tmp_path, {"discretization": {"n_boundary": 32}})
    out = tmp_path / "out"
    status = cli.main(["solve", "--config", path, "--out", str(out)])
    assert status == cli.EXIT_OK
    summary = json.loads((out / "solve.json").read_text())
    assert summary["results"]["err_psi"] <= 1e-10
    assert summary["config"]["discretization"]["n_boundary"] == 32
    assert summary["condition_check"]["passed"]
    assert "assembly_s" in summary["timings"]
    with open(out / "psi.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["t", "psi"]


def test_solve_rejects_nonzero_mean_source_with_status_3(tmp_path):
    path = _write_cfg(tmp_path, {
        "discretization": {"n_boundary": 32},
        "source_override": {"kind": "gaussian_blob"},
    })
    out = tmp_path / "out"
    status = cli.main(["solve", "--config", path, "--out", str(out)])
    assert status == cli.EXIT_COMPAT
    err = json.loads((out / "error.json").read_text())
    assert err["error"]["category"] == "CompatibilityError"


def test_solve_rejects_bad_truncation_radius_with_status_2(tmp_path):
    path = _write_cfg(tmp_path, {"discretization": {"r_trunc": 0.5}})
    out = tmp_path / "out"
    status = cli.main(["solve", "--config", path, "--out", str(out)])
    assert status == cli.EXIT_CONFIG
    err = json.loads((out / "error.json").read_text())
    assert err["error"]["category"] == "GeometryError"


def test_solve_gmres_path(tmp_path):
    path = _write_cfg(tmp_path, {
        "discretization": {"n_boundary": 32},
        "solver": {"method": "gmres"},
    })
    out = tmp_path / "out"
    assert cli.main(["solve", "--config", path, "--out", str(out)]) == 0
    summary = json.loads((out / "solve.json").read_text())
    assert summary["results"]["solver"] == "gmres"


def test_verify_command(tmp_path):
    path = _write_cfg(tmp_path, {"discretization": {"n_boundary": 32}})
    out = tmp_path / "out"
    status = cli.main(["verify", "--config", path, "--out", str(out)])
    assert status == cli.EXIT_OK
    report = json.loads((out / "verify.json").read_text())
    assert all(report["results"]["verdicts"].values())
    assert report["results"]["remainder_norm"] <= 1e-12


def test_convergence_command_csv_schema(tmp_path):
    path = _write_cfg(tmp_path, {"study": {"n_values": [16, 32]}})
    out = tmp_path / "out"
    status = cli.main(["convergence", "--config", path, "--out", str(out)])
    assert status == cli.EXIT_OK
    with open(out / "convergence.csv") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = list(reader)
    assert header == ["N", "h", "err_u", "err_psi", "order"]
    assert len(body) == 2
    assert body[1][0] == "32"
    assert float(body[1][3]) <= 1e-10


def test_conditioning_command_csv_schema(tmp_path):
    path = _write_cfg(tmp_path, {
        "conditioning": {"n_values": [16, 32], "mesh_n": 32},
    })
    out = tmp_path / "out"
    status = cli.main(["conditioning", "--config", path, "--out", str(out)])
    assert status == cli.EXIT_OK
    with open(out / "conditioning.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["N", "cond_M", "sigma_min_V"]
    report = json.loads((out / "conditioning.json").read_text())
    assert report["results"]["max_cond_ratio"] <= 2.0


def test_selftest_passes_and_is_deterministic(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["selftest", "--out", str(out)]) == cli.EXIT_OK
    first = (out / "selftest.json").read_bytes()
    text = capsys.readouterr().out
    assert "PASS" in text and "FAIL" not in text
    assert cli.main(["selftest", "--out", str(out)]) == cli.EXIT_OK
    assert (out / "selftest.json").read_bytes() == first


def test_selftest_normal_flip_negative_control(tmp_path, capsys):
    out = tmp_path / "out"
    status = cli.main(["selftest", "--flip-normals", "--out", str(out)])
    assert status == cli.EXIT_FAIL
    text = capsys.readouterr().out
    assert "FAIL constant-density-interior-circle" in text


def test_seed_flag_overrides_config(tmp_path):
    path = _write_cfg(tmp_path, {"seed": 5,
                                 "discretization": {"n_boundary": 32}})
    out = tmp_path / "out"
    assert cli.main(["solve", "--config", path, "--seed", "9",
                     "--out", str(out)]) == 0
    summary = json.loads((out / "solve.json").read_text())
    assert summary["config"]["seed"] == 9
