import pytest

from hybridplan.config import StackConfig, load_config
from hybridplan.errors import ConfigError
from hybridplan.geometry import Footprint


def test_defaults():
    cfg = load_config()
    assert cfg == StackConfig()
    assert cfg.mpt.footprint == cfg.footprint
    assert cfg.sampler.horizon_points == cfg.mpt.horizon_points == 80


def test_footprint_shared_with_mpt():
    cfg = StackConfig(footprint=Footprint(length=5.0))
    assert cfg.mpt.footprint.length == 5.0


def test_nested_overrides():
    cfg = StackConfig.from_dict(
        {
            "mpt": {"weights": {"w_y": 2.0}, "n_fix": 3},
            "cruise": {"v_max": 20},
            "sampler": {"speed_fractions": [0.5, 1]},
            "sim": {"stop_at_goal": False},
            "trainer": {"optimizer": "sgd"},
        }
    )
    assert cfg.mpt.weights.w_y == 2.0
    assert cfg.mpt.n_fix == 3
    assert cfg.cruise.v_max == 20.0
    assert isinstance(cfg.cruise.v_max, float)
    assert cfg.sampler.speed_fractions == (0.5, 1.0)
    assert not cfg.sim.stop_at_goal
    assert cfg.trainer.optimizer == "sgd"
    assert cfg.mpt.weights.w_theta == StackConfig().mpt.weights.w_theta


def test_round_trip():
    cfg = StackConfig.from_dict({"mpt": {"debug_dump_dir": "/tmp/dumps"}})
    data = cfg.to_dict()
    assert "footprint" not in data["mpt"]
    assert StackConfig.from_dict(data) == cfg


@pytest.mark.parametrize(
    "data, pointer",
    [
        ({"mpt": {"bogus": 1}}, "/mpt/bogus"),
        ({"nothing": {}}, "/nothing"),
        ({"trainer": {"epochs": 1.5}}, "/trainer/epochs"),
        ({"sim": {"stop_at_goal": 1}}, "/sim/stop_at_goal"),
        ({"cruise": {"v_max": "fast"}}, "/cruise/v_max"),
        ({"cruise": {"v_max": True}}, "/cruise/v_max"),
        ({"sampler": {"speed_fractions": [0.5, "x"]}}, "/sampler/speed_fractions/1"),
        ({"mpt": 3}, "/mpt"),
        ({"cruise": {"a_min": 1.0}}, "/cruise"),
        ({"mpt": {"dt": 0.2}}, "/mpt/dt"),
        ({"mpt": {"horizon_points": 60}}, "/mpt/horizon_points"),
        ({"dropout": 1.0}, "/dropout"),
    ],
)
def test_invalid(data, pointer):
    with pytest.raises(ConfigError) as info:
        StackConfig.from_dict(data)
    assert info.value.path == pointer


def test_load_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{"cruise": {"w_jerk": 2.0}}')
    assert load_config(str(path)).cruise.w_jerk == 2.0


def test_load_invalid_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{")
    with pytest.raises(ConfigError, match="invalid json"):
        load_config(str(path))
