import numpy as np
import pytest
from typer.testing import CliRunner

from cli.__main__ import app, initialize, plugin_manager
from pose.harness.io import load_observations, load_pose_records, load_poses
from share.util import load_json

runner = CliRunner()


@pytest.fixture(scope="module", autouse=True)
def loaded_plugins():
    initialize()
    yield
    plugin_manager.shutdown_all()


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    result = invoke("--seed", 5, "synth", "--out", out, "--frames", 4, "--train-frames", 300)
    assert result.exit_code == 0, result.output
    return out


def test_version_and_plugins():
    result = invoke("version")
    assert result.exit_code == 0
    assert "htpose v0.1.0" in result.output

    result = invoke("plugins")
    assert result.exit_code == 0
    for name in ("synth", "fit-prior", "fit-angle-model", "triangulate", "refine", "evaluate", "compare", "sweep"):
        assert name in result.output


def test_synth_outputs(dataset):
    for name in ("cameras.json", "gt_poses.json", "true_observations.json", "observations.json", "train_poses.json"):
        assert (dataset / name).exists()
    assert len(load_poses(dataset / "gt_poses.json")) == 4
    assert len(load_poses(dataset / "train_poses.json")) == 300
    assert len(load_json(dataset / "cameras.json")) == 4


def test_synth_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert invoke("--seed", 11, "synth", "--out", tmp_path / name, "--frames", 2).exit_code == 0
    assert invoke("--seed", 12, "synth", "--out", tmp_path / "c", "--frames", 2).exit_code == 0
    first = (tmp_path / "a" / "observations.json").read_text()
    assert (tmp_path / "b" / "observations.json").read_text() == first
    assert (tmp_path / "c" / "observations.json").read_text() != first


def test_synth_rejects_bad_rates(tmp_path):
    result = invoke("synth", "--out", tmp_path / "bad", "--frames", 2, "--outliers", 1.5)
    assert result.exit_code == 2


def test_prior_triangulate_evaluate_compare(dataset):
    d = dataset
    result = invoke("fit-prior", d / "train_poses.json", "--hop", 0, "--hop", 1, "--dim", "0=10", "--dim", "1=8",
                    "--lambda", "0=100", "--lambda", "1=100", "--out", d / "prior.json")
    assert result.exit_code == 0, result.output
    assert [item["hop"] for item in load_json(d / "prior.json")] == [0, 1]

    for mode in ("at", "ht"):
        args = ["triangulate", "--cameras", d / "cameras.json", "--obs", d / "observations.json",
                "--mode", mode, "--out", d / f"{mode}_poses.json"]
        if mode == "ht":
            args += ["--prior", d / "prior.json", "--lambda", "1=50"]
        result = invoke(*args)
        assert result.exit_code == 0, result.output
    records = load_pose_records(d / "ht_poses.json")
    assert [r.frame for r in records] == [0, 1, 2, 3]
    assert all(r.report is not None and set(r.report.reconstruction_residual) == {0, 1} for r in records)
    assert all(r.report is None for r in load_pose_records(d / "at_poses.json"))

    result = invoke("evaluate", "--poses", d / "ht_poses.json", "--gt", d / "gt_poses.json",
                    "--obs", d / "observations.json", "--cameras", d / "cameras.json",
                    "--out", d / "ht_metrics.csv")
    assert result.exit_code == 0, result.output
    summary = load_json(d / "ht_metrics.json")
    assert summary["frames"] == 4
    assert summary["metrics"]["MPJPE"] < 200.0

    result = invoke("compare", d / "at_poses.json", d / "ht_poses.json", "--out", d / "delta.json")
    assert result.exit_code == 0, result.output
    delta = load_json(d / "delta.json")
    assert delta["frames"] == 4
    assert len(delta["absolute"]) == 17


def test_angle_model_and_plausibility_metrics(dataset):
    d = dataset
    result = invoke("fit-angle-model", d / "train_poses.json", "--components", 1, "--out", d / "plausibility.json")
    assert result.exit_code == 0, result.output
    assert invoke("triangulate", "--cameras", d / "cameras.json", "--obs", d / "true_observations.json",
                  "--mode", "lt", "--out", d / "lt_poses.json").exit_code == 0
    result = invoke("evaluate", "--poses", d / "lt_poses.json", "--gt", d / "gt_poses.json",
                    "--obs", d / "true_observations.json", "--cameras", d / "cameras.json",
                    "--model", d / "plausibility.json", "--out", d / "lt_metrics.csv")
    assert result.exit_code == 0, result.output
    summary = load_json(d / "lt_metrics.json")
    assert summary["metrics"]["MPJPE"] < 1e-6
    assert "L_ja" in summary["metrics"]
    assert summary["plausibility"]["total"] == 4


def test_triangulate_ht_requires_prior(dataset):
    result = invoke("triangulate", "--cameras", dataset / "cameras.json", "--obs", dataset / "observations.json",
                    "--mode", "ht", "--out", dataset / "never.json")
    assert result.exit_code == 2
    assert not (dataset / "never.json").exists()


def test_compare_frame_mismatch(dataset, tmp_path):
    assert invoke("--seed", 5, "synth", "--out", tmp_path, "--frames", 2).exit_code == 0
    result = invoke("compare", dataset / "gt_poses.json", tmp_path / "gt_poses.json")
    assert result.exit_code == 2


def test_malformed_observations_exit_code(dataset, tmp_path):
    bad = tmp_path / "obs.json"
    bad.write_text('{"frame": 0, "views": [{"camera": 0, "points": [[1.0, 2.0]]}]}')
    result = invoke("triangulate", "--cameras", dataset / "cameras.json", "--obs", bad,
                    "--mode", "at", "--out", tmp_path / "poses.json")
    assert result.exit_code == 2
    assert "MalformedInput" in result.output
    assert not (tmp_path / "poses.json").exists()


def test_malformed_poses_exit_code(dataset, tmp_path):
    bad = tmp_path / "poses.json"
    bad.write_text('[{"frame": 0, "points": []}]')
    result = invoke("compare", dataset / "gt_poses.json", bad)
    assert result.exit_code == 2


def test_sweep_writes_report(tmp_path):
    out = tmp_path / "sweep.csv"
    result = invoke("sweep", "--param", "lambda", "--value", "0", "--value", "4000", "--frames", 3,
                    "--train-frames", 300, "--out", out)
    assert result.exit_code == 0, result.output
    assert out.read_text().splitlines()[0] == "setting,metric,value"
    summary = load_json(tmp_path / "sweep.json")
    assert summary["kind"] == "lambda"
    assert [p["setting"] for p in summary["points"]] == ["0", "4000"]
    assert "PPP.2" in summary["points"][0]["metrics"]


def test_sweep_rejects_unknown_factor(tmp_path):
    result = invoke("sweep", "--param", "depth", "--value", "1", "--frames", 2, "--train-frames", 100,
                    "--out", tmp_path / "sweep.csv")
    assert result.exit_code == 2


def test_refine_from_maps(tmp_path):
    assert invoke("synth", "--out", tmp_path, "--frames", 1, "--with-maps").exit_code == 0
    result = invoke("refine", "--cameras", tmp_path / "cameras.json", "--maps", tmp_path / "maps",
                    "--out", tmp_path / "refined.json")
    assert result.exit_code == 0, result.output
    refined = load_observations(tmp_path / "refined.json")
    initial = load_observations(tmp_path / "refined_initial.json")
    assert len(refined) == len(initial) == 1
    assert refined[0].points.shape == (4, 17, 2)
    assert np.all(np.isfinite(refined[0].points))
