import os

import numpy as np
import pytest

import hybridplan
from hybridplan.config import StackConfig
from hybridplan.geometry import Footprint
from hybridplan.neural.expert import gen_expert_data
from hybridplan.neural.mlp import MlpModel
from hybridplan.neural.train import TrainerConfig, train
from hybridplan.sim import load_scenario, scenario_paths

SCENARIO_DIR = os.path.join(os.path.dirname(hybridplan.__file__), "scenarios")
TRAINING_SAMPLES = 240
HELD_OUT_SAMPLES = 40


@pytest.fixture
def footprint():
    return Footprint()


@pytest.fixture
def stack_config():
    return StackConfig()


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR


@pytest.fixture(scope="session")
def shipped_scenarios():
    return {
        os.path.splitext(os.path.basename(path))[0]: load_scenario(path)
        for path in scenario_paths(SCENARIO_DIR)
    }


@pytest.fixture(scope="session")
def expert_samples(shipped_scenarios):
    """Expert samples of every shipped scenario split into training and
    held-out parts"""
    samples = gen_expert_data(
        list(shipped_scenarios.values()),
        TRAINING_SAMPLES + HELD_OUT_SAMPLES,
        StackConfig(),
        seed=3,
    )
    order = np.random.default_rng(0).permutation(len(samples))
    held_out = set(order[:HELD_OUT_SAMPLES].tolist())
    return (
        [s for i, s in enumerate(samples) if i not in held_out],
        [s for i, s in enumerate(samples) if i in held_out],
    )


@pytest.fixture(scope="session")
def trained_model(expert_samples):
    training, _ = expert_samples
    cfg = TrainerConfig(batch_size=16, epochs=60, lr_decay=0.97, seed=0)
    model, _ = train(MlpModel(seed=0), training, cfg)
    return model
