import os

import numpy as np
import pytest
from click.testing import CliRunner

import hybridplan.utils.compat_json as json
from hybridplan.__version__ import __version__
from hybridplan.cli import hybridplan
from hybridplan.neural.features import FEATURE_SIZE, FeatureVector
from hybridplan.neural.model_file import load_model
from hybridplan.neural.train import TrainingSample, read_dataset
from hybridplan.sim import read_trace, save_scenario
from tests.builders import box, make_scenario


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def scenario_file(tmp_path):
    path = str(tmp_path / "short.json")
    save_scenario(make_scenario(duration_s=1.0, name="short"), path)
    return path


@pytest.fixture
def blocked_file(tmp_path):
    path = str(tmp_path / "blocked.json")
    scn = make_scenario(
        duration_s=1.0, name="blocked", obstacles=[box(6.0, -3.0, 7.0, 3.0)]
    )
    save_scenario(scn, path)
    return path


def invoke(runner, *args):
    return runner.invoke(hybridplan, [str(arg) for arg in args])


def test_version(runner):
    result = invoke(runner, "--version")
    assert result.exit_code == 0
    assert __version__ in result.output


def test_route(runner, scenario_file):
    result = invoke(runner, "route", scenario_file)
    assert result.exit_code == 0
    assert result.output.splitlines()[0] == "a -> b -> c"
    assert "length: 120.00 m" in result.output


def test_invalid_scenario_exits_1(runner, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"version": 1, "lanes": []}')
    result = invoke(runner, "route", path)
    assert result.exit_code == 1
    assert "ScenarioError" in result.output


def test_invalid_config_exits_1(runner, tmp_path, scenario_file):
    config = tmp_path / "config.json"
    config.write_text('{"cruise": {"v_max": "fast"}}')
    result = invoke(runner, "route", scenario_file, "--config", config)
    assert result.exit_code == 1
    assert "/cruise/v_max" in result.output


def test_missing_file_exits_2(runner, tmp_path):
    result = invoke(runner, "route", tmp_path / "missing.json")
    assert result.exit_code == 2


def test_plan_to_stdout(runner, scenario_file):
    result = invoke(runner, "plan", scenario_file, "--t", 0.3, "--mode", "sample_only")
    assert result.exit_code == 0, result.output
    data = json.loads(result.output)
    assert data["mode"] == "sample_only"
    assert data["time"] == pytest.approx(0.3)
    assert len(data["candidates"]) == 15
    assert data["mpt"] is None


def test_plan_to_file(runner, scenario_file, tmp_path):
    out = tmp_path / "cycle.json"
    result = invoke(
        runner, "plan", scenario_file, "--mode", "optimizer_only", "--out", out
    )
    assert result.exit_code == 0, result.output
    data = json.loads(out.read_bytes())
    assert data["time"] == 0.0
    assert data["mpt"] is not None


def test_plan_negative_time(runner, scenario_file):
    result = invoke(runner, "plan", scenario_file, "--t", -1.0)
    assert result.exit_code == 2


def test_simulate_score_compare(runner, scenario_file, blocked_file, tmp_path):
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    result = invoke(
        runner, "simulate", scenario_file, "--mode", "sample_only", "--out", first
    )
    assert result.exit_code == 0, result.output
    assert "11 ticks written" in result.output
    assert len(read_trace(str(first))) == 11

    result = invoke(
        runner, "simulate", blocked_file, "--mode", "sample_only", "--out", second
    )
    assert result.exit_code == 0, result.output

    result = invoke(runner, "score", first, scenario_file)
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["collisions"] == 0
    assert report["min_gap_vs_safe_distance"] is None

    result = invoke(runner, "compare", first, second, "--scenario", scenario_file)
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    assert lines[0].split() == ["metric", "a", "b", "b", "-", "a"]
    assert any(line.startswith("progress_m") for line in lines)


def test_compare_requires_scenario(runner, tmp_path):
    result = invoke(runner, "compare", tmp_path / "a", tmp_path / "b")
    assert result.exit_code == 2


def test_gen_data_train_and_simulate(runner, scenario_file, tmp_path, mocker):
    rng = np.random.default_rng(0)
    samples = [
        TrainingSample(
            FeatureVector.from_array(rng.normal(size=FEATURE_SIZE)),
            rng.normal(size=(80, 2)),
        )
        for _ in range(4)
    ]
    gen = mocker.patch("hybridplan.cli.gen_expert_data", return_value=samples)
    data = tmp_path / "data.jsonl"
    result = invoke(
        runner, "gen-data", tmp_path, "--n", 4, "--out", data, "--seed", 3
    )
    assert result.exit_code == 0, result.output
    assert "4 samples written" in result.output
    (scenarios, count, _), kwargs = gen.call_args
    assert [scn.name for scn in scenarios] == ["short"]
    assert count == 4
    assert kwargs == {"seed": 3}
    assert len(read_dataset(str(data))) == 4

    model = tmp_path / "model.bin"
    result = invoke(
        runner,
        "train-mlp",
        "--data",
        data,
        "--out",
        model,
        "--epochs",
        2,
        "--batch-size",
        2,
        "--seed",
        1,
    )
    assert result.exit_code == 0, result.output
    assert "final loss" in result.output
    assert load_model(str(model)).parameter_count > 0

    trace = tmp_path / "nn.jsonl"
    result = invoke(
        runner,
        "simulate",
        scenario_file,
        "--mode",
        "nn_only",
        "--model",
        model,
        "--out",
        trace,
    )
    assert result.exit_code == 0, result.output
    assert all(tick.mlp_invoked for tick in read_trace(str(trace)).ticks)


def test_simulate_is_deterministic(runner, scenario_dir, tmp_path):
    scenario = os.path.join(scenario_dir, "acc.json")
    traces = []
    for name in ("first.jsonl", "second.jsonl"):
        out = tmp_path / name
        result = invoke(runner, "simulate", scenario, "--mode", "hybrid", "--out", out)
        assert result.exit_code == 0, result.output
        traces.append(out.read_bytes())
    assert traces[0] and traces[0] == traces[1]
