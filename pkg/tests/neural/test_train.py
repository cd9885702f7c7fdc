import importlib

import numpy as np
import pytest

from hybridplan.errors import InvalidParameterError, TrainingDivergedError
from hybridplan.neural.features import FEATURE_SIZE, FeatureVector
from hybridplan.neural.mlp import MlpModel, l2_loss
from hybridplan.neural.train import (
    Adam,
    Sgd,
    TrainerConfig,
    TrainingSample,
    evaluate_against_baseline,
    make_optimizer,
    read_dataset,
    train,
    train_step,
    write_dataset,
)


def make_samples(count, seed=0, baseline=False):
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(count):
        target = 0.5 * rng.normal(size=(80, 2))
        samples.append(
            TrainingSample(
                FeatureVector.from_array(5.0 * rng.normal(size=FEATURE_SIZE)),
                target,
                target + 0.1 if baseline else None,
            )
        )
    return samples


def stack(samples):
    return (
        np.stack([s.features.as_array() for s in samples]),
        np.stack([s.target for s in samples]),
    )


def test_config_invalid():
    with pytest.raises(InvalidParameterError):
        TrainerConfig(learning_rate=0.0)
    with pytest.raises(InvalidParameterError):
        TrainerConfig(validation_split=1.0)
    with pytest.raises(InvalidParameterError):
        TrainerConfig(batch_size=0)
    with pytest.raises(InvalidParameterError):
        TrainerConfig(optimizer="rmsprop")
    with pytest.raises(InvalidParameterError):
        TrainerConfig(lr_decay=1.5)


def test_sample_shapes():
    (sample,) = make_samples(1)
    with pytest.raises(InvalidParameterError):
        TrainingSample(sample.features, np.zeros((79, 2)))
    with pytest.raises(InvalidParameterError):
        TrainingSample.from_dict({"history": sample.features.history})


def test_make_optimizer():
    assert isinstance(make_optimizer(TrainerConfig()), Adam)
    sgd = make_optimizer(TrainerConfig(optimizer="sgd", momentum=0.5))
    assert isinstance(sgd, Sgd)
    assert sgd.momentum == 0.5


def test_sgd_steps_descend():
    model = MlpModel(seed=0, dropout=0.0)
    features, targets = stack(make_samples(4))
    optimizer = Sgd(1e-4)
    losses = [train_step(model, optimizer, features, targets) for _ in range(5)]
    assert np.all(np.diff(losses) < 0.0)
    assert l2_loss(model.forward(features), targets) < losses[-1]


def test_overfits_tiny_dataset():
    model = MlpModel(seed=0, dropout=0.0)
    cfg = TrainerConfig(learning_rate=1e-4, batch_size=8, epochs=300, lr_decay=0.99)
    _, history = train(model, make_samples(10), cfg)
    assert len(history.train) == 300
    assert len(history.validation) == 300
    assert history.train[-1] < 0.01
    assert history.train[-1] < min(history.train[:10])


def test_same_seed_same_history():
    samples = make_samples(6)
    cfg = TrainerConfig(batch_size=4, epochs=3, seed=5)
    first_model, first = train(MlpModel(seed=1), samples, cfg)
    second_model, second = train(MlpModel(seed=1), samples, cfg)
    assert first.train == second.train
    assert first.validation == second.validation
    np.testing.assert_array_equal(
        first_model.layers["output"].weight, second_model.layers["output"].weight
    )


def test_single_sample_has_no_validation():
    _, history = train(MlpModel(), make_samples(1), TrainerConfig(epochs=2))
    assert history.validation == [None, None]
    assert history.to_dict()["train"] == history.train


def test_empty_dataset():
    with pytest.raises(InvalidParameterError, match="empty dataset"):
        train(MlpModel(), [], TrainerConfig())


def test_diverged(mocker):
    train_module = importlib.import_module("hybridplan.neural.train")
    mocker.patch.object(train_module, "l2_loss", return_value=float("nan"))
    with pytest.raises(TrainingDivergedError, match="training diverged"):
        train(MlpModel(), make_samples(4), TrainerConfig(epochs=1))


def test_dataset_round_trip(fs):
    samples = make_samples(3, baseline=True) + make_samples(1, seed=1)
    assert write_dataset(samples, "set.jsonl") == 4
    dataset = read_dataset("set.jsonl")
    try:
        assert len(dataset) == 4
        np.testing.assert_allclose(dataset[2].target, samples[2].target)
        np.testing.assert_allclose(
            dataset[0].features.as_array(), samples[0].features.as_array()
        )
        np.testing.assert_allclose(dataset[1].baseline, samples[1].baseline)
        assert dataset[3].baseline is None
        assert len(dataset[1:3]) == 2
    finally:
        dataset.close()


def test_evaluate_against_baseline():
    model = MlpModel()
    model.set_parameters({name: np.zeros_like(p) for name, p in model.parameters()})
    samples = make_samples(3, baseline=True) + make_samples(2, seed=1)
    model_loss, baseline_loss = evaluate_against_baseline(model, samples)
    targets = np.stack([s.target for s in samples[:3]])
    assert model_loss == pytest.approx(float(np.mean(np.sum(targets**2, axis=-1))))
    assert baseline_loss == pytest.approx(0.02)
    with pytest.raises(InvalidParameterError):
        evaluate_against_baseline(model, make_samples(2))


def test_trained_model_beats_planner_on_held_out(expert_samples, trained_model):
    training, held_out = expert_samples
    assert len(held_out) > 0
    assert not {id(s) for s in training} & {id(s) for s in held_out}
    model_loss, baseline_loss = evaluate_against_baseline(trained_model, held_out)
    assert model_loss < baseline_loss
