"""Imitation training of :class:`~hybridplan.neural.mlp.MlpModel`

Samples are held as :class:`TrainingSample` and persisted one per line in
the indexed JSONL store, so a shuffled minibatch reads only its own records.
"""

import math
from dataclasses import dataclass, field
from logging import getLogger as get_logger
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from hybridplan.errors import InvalidParameterError, TrainingDivergedError
from hybridplan.neural.features import FeatureVector
from hybridplan.neural.mlp import OUTPUT_WAYPOINTS, MlpModel, l2_loss, l2_loss_gradient
from hybridplan.store import records_open

__all__ = [
    "Adam",
    "LossHistory",
    "Sgd",
    "TrainerConfig",
    "TrainingSample",
    "evaluate_against_baseline",
    "make_optimizer",
    "read_dataset",
    "train",
    "train_step",
    "write_dataset",
]

logger = get_logger(__name__)

OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainerConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    lr_decay: float = 1.0
    seed: int = 0
    validation_split: float = 0.2

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise InvalidParameterError(
                "learning_rate must be positive: %r" % self.learning_rate
            )
        if not 0.0 < self.validation_split < 1.0:
            raise InvalidParameterError(
                "validation_split must lie in (0, 1): %r" % self.validation_split
            )
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidParameterError(
                "batch_size and epochs must be >= 1: %r, %r"
                % (self.batch_size, self.epochs)
            )
        if self.optimizer not in OPTIMIZERS:
            raise InvalidParameterError(
                "unknown optimizer: %r, expect one of %r" % (self.optimizer, OPTIMIZERS)
            )
        if not 0.0 < self.lr_decay <= 1.0:
            raise InvalidParameterError(
                "lr_decay must lie in (0, 1]: %r" % self.lr_decay
            )


@dataclass(frozen=True)
class TrainingSample:
    """Features with the expert future, and optionally the planner's own
    future, as 80 ego-frame waypoints"""

    features: FeatureVector
    target: np.ndarray
    baseline: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("target", "baseline"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.array(value, dtype=float)
            if value.shape != (OUTPUT_WAYPOINTS, 2):
                raise InvalidParameterError(
                    "%s has shape %r, expect %r"
                    % (name, value.shape, (OUTPUT_WAYPOINTS, 2))
                )
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def to_dict(self) -> dict:
        return {
            "history": self.features.history,
            "path": self.features.path,
            "target": self.target,
            "baseline": self.baseline,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingSample":
        try:
            return cls(
                FeatureVector(data["history"], data["path"]),
                data["target"],
                data.get("baseline"),
            )
        except KeyError as error:
            raise InvalidParameterError("training sample lacks %s" % error) from None


@dataclass
class LossHistory:
    train: List[float] = field(default_factory=list)
    validation: List[Optional[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"train": self.train, "validation": self.validation}


class _SampleSequence(Sequence[TrainingSample]):
    def __init__(self, reader):
        self._reader = reader

    def __len__(self) -> int:
        return len(self._reader)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [TrainingSample.from_dict(item) for item in self._reader[index]]
        return TrainingSample.from_dict(self._reader[index])

    def close(self):
        self._reader.close()


def write_dataset(samples: Iterable[TrainingSample], path: str) -> int:
    count = 0
    with records_open(path, "w") as writer:
        for sample in samples:
            writer.append(sample.to_dict())
            count += 1
    logger.info("dataset written: %r, %d samples", path, count)
    return count


def read_dataset(path: str) -> Sequence[TrainingSample]:
    """Lazy random-access view of a dataset written by :func:`write_dataset`"""
    return _SampleSequence(records_open(path, "r"))


class Sgd:
    def __init__(self, learning_rate: float, momentum: float = 0.0):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self._velocity: Dict[str, np.ndarray] = {}

    def step(self, model: MlpModel, grads: Dict[str, np.ndarray]):
        for name, param in model.parameters():
            velocity = self._velocity.get(name)
            if velocity is None:
                velocity = self._velocity[name] = np.zeros_like(param)
            velocity *= self.momentum
            velocity -= self.learning_rate * grads[name]
            param += velocity


class Adam:
    def __init__(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self._steps = 0
        self._moments: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}

    def step(self, model: MlpModel, grads: Dict[str, np.ndarray]):
        self._steps += 1
        correction1 = 1.0 - self.beta1**self._steps
        correction2 = 1.0 - self.beta2**self._steps
        for name, param in model.parameters():
            if name not in self._moments:
                self._moments[name] = (np.zeros_like(param), np.zeros_like(param))
            first, second = self._moments[name]
            grad = grads[name]
            first *= self.beta1
            first += (1.0 - self.beta1) * grad
            second *= self.beta2
            second += (1.0 - self.beta2) * grad * grad
            param -= (
                self.learning_rate
                * (first / correction1)
                / (np.sqrt(second / correction2) + self.epsilon)
            )


def make_optimizer(cfg: TrainerConfig):
    if cfg.optimizer == "sgd":
        return Sgd(cfg.learning_rate, cfg.momentum)
    return Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)


def _stack(samples: Sequence[TrainingSample]) -> Tuple[np.ndarray, np.ndarray]:
    features = np.stack([sample.features.as_array() for sample in samples])
    targets = np.stack([sample.target for sample in samples])
    return features, targets


def train_step(model: MlpModel, optimizer, features, targets) -> float:
    """One gradient step on a batch in training mode

    :returns: Batch loss before the update
    """
    pred, cache = model.forward_with_cache(features, training=True)
    loss = l2_loss(pred, targets)
    if not math.isfinite(loss):
        raise TrainingDivergedError("training diverged: batch loss %r" % loss)
    optimizer.step(model, model.backward(cache, l2_loss_gradient(pred, targets)))
    return loss


def _eval_loss(model: MlpModel, samples: Sequence[TrainingSample]) -> float:
    features, targets = _stack(samples)
    return l2_loss(model.forward(features), targets)


def train(
    model: MlpModel, dataset: Sequence[TrainingSample], cfg: TrainerConfig
) -> Tuple[MlpModel, LossHistory]:
    """Fit ``model`` in place to the expert targets of ``dataset``

    The split, the shuffle order and the dropout masks all derive from
    ``cfg.seed``.

    :returns: The model and the eval-mode losses after every epoch
    :raises TrainingDivergedError: When any loss becomes non-finite
    """
    total = len(dataset)
    if total == 0:
        raise InvalidParameterError("empty dataset")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    model.reseed(cfg.seed)
    order = rng.permutation(total)
    n_validation = int(math.floor(total * cfg.validation_split))
    if n_validation >= total:
        n_validation = total - 1
    validation = [dataset[int(i)] for i in order[:n_validation]]
    training = [dataset[int(i)] for i in order[n_validation:]]
    optimizer = make_optimizer(cfg)
    history = LossHistory()
    for epoch in range(cfg.epochs):
        shuffled = rng.permutation(len(training))
        for start in range(0, len(training), cfg.batch_size):
            batch = [training[int(i)] for i in shuffled[start : start + cfg.batch_size]]
            train_step(model, optimizer, *_stack(batch))
        train_loss = _eval_loss(model, training)
        val_loss = _eval_loss(model, validation) if validation else None
        if not math.isfinite(train_loss) or (
            val_loss is not None and not math.isfinite(val_loss)
        ):
            raise TrainingDivergedError(
                "training diverged: epoch %d, loss %r" % (epoch, train_loss)
            )
        history.train.append(train_loss)
        history.validation.append(val_loss)
        logger.info(
            "epoch %d/%d: train %.4f, validation %s",
            epoch + 1,
            cfg.epochs,
            train_loss,
            "-" if val_loss is None else "%.4f" % val_loss,
        )
        optimizer.learning_rate *= cfg.lr_decay
    return model, history


def evaluate_against_baseline(
    model: MlpModel, samples: Sequence[TrainingSample]
) -> Tuple[float, float]:
    """Mean L2 of the model and of the planner baseline against the expert

    Samples without a baseline are skipped.
    """
    usable = [sample for sample in samples if sample.baseline is not None]
    if not usable:
        raise InvalidParameterError("no samples with a planner baseline")
    features, targets = _stack(usable)
    baselines = np.stack([sample.baseline for sample in usable])
    return l2_loss(model.forward(features), targets), l2_loss(baselines, targets)
