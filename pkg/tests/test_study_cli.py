import json

import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from app.errors import ConfigError
from app.services.study import StudyConfig, apply_overrides, echo, load_config
from app.services.study.checks import log_sup_samples
from main import app

runner = CliRunner()


def _read_csv(path):
    with open(path) as fh:
        first = fh.readline()
    return first, pd.read_csv(path, comment="#")


# Configuration loading and overrides
def test_defaults_match_the_desk_study():
    config = load_config(None)
    assert config.sets.seed == 20190101
    assert len(config.delta_training_set()) == 121
    assert np.diff(config.delta_training_set())[0] == pytest.approx(2.0**-7)
    assert len(config.s_training_set()) == 50
    np.testing.assert_array_equal(config.delta_test_set(), config.delta_test_set())
    assert config.s_test_set().min() >= config.kernel.s_min


def test_overrides_are_revalidated(tmp_path):
    config = apply_overrides(StudyConfig(), out=tmp_path, seed=7, mesh_exp=5)
    assert config.out_dir == tmp_path and config.sets.seed == 7 and config.mesh_exp == 5
    assert config.build_mesh().n_el == 32
    assert echo(config)["mesh"]["mesh_exp"] == 5
    with pytest.raises(ConfigError):
        apply_overrides(StudyConfig(), mesh_exp=20)


def test_bad_config_files(tmp_path):
    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("kernel:\n  radius: 3\n")
    with pytest.raises(ConfigError, match="kernel.radius"):
        load_config(unknown)
    broken = tmp_path / "broken.yaml"
    broken.write_text("kernel: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(broken)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    window = tmp_path / "window.yaml"
    window.write_text("partition:\n  rate_from: 0.0\n")
    with pytest.raises(ConfigError, match="rate_from"):
        load_config(window)


# Configuration errors exit with code 2
def test_cli_config_error_exit_code(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("sgrid:\n  M: []\n")
    result = runner.invoke(app, ["affine-s", "--config", str(path)])
    assert result.exit_code == 2


def test_cli_regularization_error_exit_code(study_file):
    path = study_file(kernel={"s_min": 0.1, "s_max": 0.9})
    result = runner.invoke(app, ["affine-s", "--config", str(path)])
    assert result.exit_code == 2


def test_cli_snapshots(study_file, tmp_path):
    result = runner.invoke(app, ["snapshots", "--config", str(study_file(snapshots={"s_values": [0.3, 0.7]}))])
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    first, frame = _read_csv(out / "snapshots_delta.csv")
    assert first.startswith("# mirrors: ")
    assert list(frame.columns) == ["x", "value", "parameter"]
    assert len(frame) == 3 * 17
    _, frame_s = _read_csv(out / "snapshots_s.csv")
    assert sorted(frame_s["parameter"].unique()) == [0.3, 0.7]
    report = json.loads((out / "report.json").read_text())
    assert report["command"] == "snapshots"
    assert report["config"]["mesh"]["mesh_exp"] == 4
    assert {"numpy", "scipy"} <= set(report["versions"])


def test_cli_snapshots_needs_both_lists(study_file):
    result = runner.invoke(app, ["snapshots", "--config", str(study_file(snapshots={"deltas": []}))])
    assert result.exit_code == 2


# Anchor files are stored once; a corrupted one fails the nodal check
def test_cli_validate_nodal_exactness(study_file, tmp_path):
    args = ["validate", "--config", str(study_file()), "--only", "nodal_exactness"]
    result = runner.invoke(app, args)
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert {c["name"] for c in report["checks"]} == {"nodal_exactness_delta", "nodal_exactness_s"}
    assert all(c["passed"] for c in report["checks"])

    anchor = sorted((tmp_path / "out" / "anchors").glob("*.npy"))[2]
    A = np.load(anchor)
    A[3, 3] *= 1.0 + 1e-9
    np.save(anchor, A)
    result = runner.invoke(app, args)
    assert result.exit_code == 1
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert not report["checks"][0]["passed"]


def test_cli_validate_unknown_check(study_file):
    result = runner.invoke(app, ["validate", "--config", str(study_file()), "--only", "no_such_check"])
    assert result.exit_code == 2


def test_cli_validate_cheap_checks(study_file):
    args = ["validate", "--config", str(study_file()), "--only", "coefficient_identities", "--only", "splitting_invariance"]
    result = runner.invoke(app, args)
    assert result.exit_code == 0, result.output


def test_log_sup_samples_cover_positive_orders():
    samples = log_sup_samples(np.random.default_rng(0), 500)
    orders = [k for _, k, _ in samples]
    assert min(orders) == 1 and max(orders) == 6
    assert all(0.05 <= a <= 2.0 and 0.1 <= d <= 3.0 for a, _, d in samples)


# Study commands write their tables
def test_cli_affine_s(study_file, tmp_path):
    result = runner.invoke(app, ["affine-s", "--config", str(study_file())])
    assert result.exit_code == 0, result.output
    _, convergence = _read_csv(tmp_path / "out" / "affine_s_convergence.csv")
    assert list(convergence["M"]) == [0, 2, 4]
    assert convergence["max_error"].iloc[-1] < convergence["max_error"].iloc[1]


def test_cli_affine_delta_with_matrices(study_file, tmp_path):
    path = study_file(output={"matrices": "text"})
    result = runner.invoke(app, ["affine-delta", "--config", str(path)])
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    _, convergence = _read_csv(out / "affine_delta_convergence.csv")
    assert set(convergence["case"]) == {"case1", "case2"}
    assert (out / "matrices" / "pivot.txt").exists()
    assert len(list((out / "matrices").glob("anchor_K3_*.txt"))) == 4


def test_cli_rb(study_file, tmp_path):
    result = runner.invoke(app, ["rb", "--config", str(study_file())])
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    _, delta = _read_csv(out / "rb_delta_convergence.csv")
    assert delta["N"].iloc[0] == 0
    galerkin = delta["max_surrogate_error"].to_numpy()
    assert np.all(np.diff(galerkin) <= 1e-10 * galerkin[0])
    report = json.loads((out / "report.json").read_text())
    assert "floor_reached" in report["summary"]["runs"]["delta_K5"]
    _, greedy = _read_csv(out / "rb_greedy.csv")
    assert set(greedy["label"]) == {"delta_K5", "s_M4"}
    assert len(list((out / "models").glob("*.npz"))) == 2


def test_cli_version():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert result.output.startswith("nlrb ")
