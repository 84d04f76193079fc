import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from particlegd.cli import main
from particlegd.experiments import ConfigError, config_hash, resolve_config

FIG1_SMALL = ["--set", "n=20", "--set", "n_runs=2", "--set", "iters=200"]
FIG2_SMALL = ["--set", "n_list=[2,4,8]", "--set", "pgd_iters=200", "--set", "grid_resolution=512"]
TENSOR_SMALL = ["--set", "n_runs=3", "--set", "iters=200"]
CIRCLE_SMALL = ["--set", "iters=300", "--set", "validation.samples=20000"]


def run(tmp_path, *argv):
    code = main([*argv, "--out", str(tmp_path)])
    return code


def read_csv(path):
    with open(path, newline="") as fh:
        lines = fh.read().split("\r\n")
    comment, rest = lines[0].split("\n", 1)
    rows = list(csv.reader([rest, *lines[1:]]))
    return comment, rows[0], [r for r in rows[1:] if r]


# -- config handling ----------------------------------------------------------------


def test_bad_yaml_exits_2(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("n: [1, 2\n")
    assert run(tmp_path, "fig1", "--config", str(cfg)) == 2


def test_non_mapping_yaml_exits_2(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("- 1\n- 2\n")
    assert run(tmp_path, "fig1", "--config", str(cfg)) == 2


def test_unknown_key_exits_2(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("n: 10\nbogus_key: 1\n")
    assert run(tmp_path, "fig1", "--config", str(cfg)) == 2
    assert run(tmp_path, "fig1", "--set", "schedule.bogus=1") == 2


def test_wrong_experiment_name_exits_2(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("experiment: tensor_recovery\n")
    assert run(tmp_path, "fig1", "--config", str(cfg)) == 2


@pytest.mark.parametrize("override", ["n=0", "n=100000", "iters=-1", "n_runs=0",
                                      "schedule.kind=nope", "noise.kind=gaussian"])
def test_invalid_values_exit_2(tmp_path, override):
    assert run(tmp_path, "fig1", "--set", override) == 2


def test_missing_config_file_exits_2(tmp_path):
    assert run(tmp_path, "fig1", "--config", str(tmp_path / "none.yaml")) == 2


def test_set_requires_equals():
    with pytest.raises(ConfigError):
        resolve_config("fig1", {}, None, None, ["n"])


def test_resolution_order_and_hash():
    cfg = resolve_config("fig1", {"n": 30, "base_seed": 4}, 9, 5, ["n=40"])
    assert cfg["n"] == 40 and cfg["base_seed"] == 9 and cfg["log_every"] == 5
    same = resolve_config("fig1", {"n": 40}, 9, 5, [])
    assert config_hash(cfg) == config_hash(same)
    assert config_hash(cfg) != config_hash(resolve_config("fig1", {}, 9, 5, []))


def test_schedule_kind_change_replaces_block():
    cfg = resolve_config("fig1", {"schedule": {"kind": "constant", "gamma": 0.1}}, None, None, [])
    assert cfg["schedule"] == {"kind": "constant", "gamma": 0.1}


# -- outputs ----------------------------------------------------------------------------


def test_fig1_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(a, "fig1", *FIG1_SMALL)
    run(b, "fig1", *FIG1_SMALL)
    assert (a / "fig1.csv").read_bytes() == (b / "fig1.csv").read_bytes()
    assert (a / "fig1.json").read_bytes() == (b / "fig1.json").read_bytes()
    comment, header, rows = read_csv(a / "fig1.csv")
    doc = json.loads((a / "fig1.json").read_text())
    assert comment == f"# config_sha256={doc['config_sha256']} base_seed=0"
    assert header == ["k", "mean_f_value", "mean_suboptimality"]
    assert rows[0][0] == "0" and rows[-1][0] == "200"
    assert {"config", "config_sha256", "base_seed", "checks", "passed", "fitted_slope"} <= set(doc)


def test_seed_changes_output(tmp_path):
    run(tmp_path / "a", "fig1", *FIG1_SMALL, "--seed", "1")
    run(tmp_path / "b", "fig1", *FIG1_SMALL, "--seed", "2")
    a = (tmp_path / "a" / "fig1.csv").read_bytes()
    b = (tmp_path / "b" / "fig1.csv").read_bytes()
    assert a != b


def test_fig1_noise_free_constant_step_monotone(tmp_path):
    run(tmp_path, "fig1", *FIG1_SMALL, "--set", "noise={kind: none}",
        "--set", "schedule={kind: constant, gamma: 0.05}", "--log-every", "1")
    _, _, rows = read_csv(tmp_path / "fig1.csv")
    vals = np.array([float(r[1]) for r in rows])
    assert np.all(np.diff(vals) <= 1e-12)


def test_fig2_outputs(tmp_path):
    code = run(tmp_path, "fig2", *FIG2_SMALL)
    _, header, rows = read_csv(tmp_path / "fig2.csv")
    assert header[:2] == ["n", "error"]
    assert [r[0] for r in rows] == ["2", "4", "8"]
    doc = json.loads((tmp_path / "fig2.json").read_text())
    assert code == (0 if doc["passed"] else 1)


def test_tensor_init_at_basis_succeeds(tmp_path):
    code = run(tmp_path, "tensor", *TENSOR_SMALL, "--set", "init=basis")
    doc = json.loads((tmp_path / "tensor.json").read_text())
    assert code == 0
    assert doc["success_rate"] == 1.0


def test_circle_net_init_at_target(tmp_path):
    code = run(tmp_path, "circle-net", *CIRCLE_SMALL, "--set", "n=3", "--set", "init=target",
               "--set", "target={kind: angles, angles: [0.3, 1.2, 2.5]}",
               "--set", "noise={kind: none}")
    assert code == 0
    _, header, rows = read_csv(tmp_path / "circle_net.csv")
    assert header == ["k", "L_value", "running_min_L"]
    assert all(abs(float(r[1])) <= 1e-12 for r in rows)


def test_circle_net_default_small(tmp_path):
    code = run(tmp_path, "circle-net", *CIRCLE_SMALL)
    doc = json.loads((tmp_path / "circle_net.json").read_text())
    assert doc["checks"]["monte_carlo_agreement"]
    assert code == (0 if doc["passed"] else 1)


# -- verify --------------------------------------------------------------------------------


def test_verify_schema_and_bytes(tmp_path):
    code_a = run(tmp_path / "a", "verify")
    code_b = run(tmp_path / "b", "verify")
    a = (tmp_path / "a" / "verify.json").read_bytes()
    assert a == (tmp_path / "b" / "verify.json").read_bytes()
    doc = json.loads(a)
    props = doc["properties"]
    assert all({"name", "passed", "detail"} <= set(p) for p in props)
    failing = sorted(p["name"] for p in props if not p["passed"])
    # the only red property: star convexity of G at random sphere points
    assert failing == ["star_convexity_tensor"]
    assert code_a == code_b == 1


def test_verify_planted(tmp_path):
    run(tmp_path, "verify", "--planted")
    doc = json.loads((tmp_path / "verify.json").read_text())
    failing = sorted(p["name"] for p in doc["properties"] if not p["passed"])
    assert failing == ["planted_fd_perturbed_gradient", "planted_jensen_negated_quadratic",
                       "star_convexity_tensor"]


def test_verify_only_passing_subset_exits_0(tmp_path):
    assert run(tmp_path, "verify", "--set", "only=[jensen_energy, gradients]") == 0


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "particlegd.cli", "verify", "--set",
                          "only=[schedules]", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "PASS" in out.stdout
