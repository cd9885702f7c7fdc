"""Multilayer perceptron regressing 80 future waypoints

Both input groups are embedded into 512 dimensions by their own linear layer
and concatenated, followed by two 512-wide hidden layers with rectified
linear activation and inverted dropout, and a linear output layer. Weights
are stored as ``(in, out)`` so that a layer computes ``x @ weight + bias``.
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, Tuple, Union

import numpy as np

from hybridplan.errors import InvalidParameterError
from hybridplan.neural.features import (
    FEATURE_SIZE,
    HISTORY_CHANNELS,
    HISTORY_FRAMES,
    FeatureVector,
)

__all__ = [
    "FEATURE_SCALE",
    "LAYER_SHAPES",
    "OUTPUT_WAYPOINTS",
    "WAYPOINT_SCALE",
    "ForwardCache",
    "Linear",
    "MlpModel",
    "l2_loss",
    "l2_loss_gradient",
    "mlp_forward",
]

EMBED_SIZE = 512
HIDDEN_SIZE = 512
OUTPUT_WAYPOINTS = 80
HISTORY_SIZE = HISTORY_FRAMES * HISTORY_CHANNELS

LAYER_SHAPES = OrderedDict(
    [
        ("embed_history", (HISTORY_SIZE, EMBED_SIZE)),
        ("embed_path", (FEATURE_SIZE - HISTORY_SIZE, EMBED_SIZE)),
        ("hidden1", (2 * EMBED_SIZE, HIDDEN_SIZE)),
        ("hidden2", (HIDDEN_SIZE, HIDDEN_SIZE)),
        ("output", (HIDDEN_SIZE, 2 * OUTPUT_WAYPOINTS)),
    ]
)

FEATURE_SCALE = 0.1
WAYPOINT_SCALE = 10.0


@dataclass
class Linear:
    weight: np.ndarray
    bias: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.weight.shape

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight + self.bias


@dataclass
class ForwardCache:
    history: np.ndarray
    path: np.ndarray
    joined: np.ndarray
    pre1: np.ndarray
    mask1: np.ndarray
    out1: np.ndarray
    pre2: np.ndarray
    mask2: np.ndarray
    out2: np.ndarray


def _as_batch(features) -> Tuple[np.ndarray, bool]:
    if isinstance(features, FeatureVector):
        return features.as_array()[None, :], True
    if isinstance(features, (list, tuple)) and features and isinstance(
        features[0], FeatureVector
    ):
        return np.stack([f.as_array() for f in features]), False
    array = np.asarray(features, dtype=float)
    if array.ndim == 1:
        array, single = array[None, :], True
    else:
        single = False
    if array.ndim != 2 or array.shape[1] != FEATURE_SIZE:
        raise InvalidParameterError(
            "feature shape mismatch: %r, expect (..., %d)"
            % (array.shape, FEATURE_SIZE)
        )
    return array, single


class MlpModel:
    """Waypoint regressor with seeded initialization

    :param seed: Seed of the ``PCG64`` generator used for initialization and
        dropout masks
    :param dropout: Drop probability of the hidden layers, in [0, 1)
    """

    def __init__(self, seed: int = 0, dropout: float = 0.1):
        if not 0.0 <= dropout < 1.0:
            raise InvalidParameterError("dropout must lie in [0, 1): %r" % dropout)
        self.seed = seed
        self.dropout = float(dropout)
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self.layers: Dict[str, Linear] = OrderedDict()
        for name, (fan_in, fan_out) in LAYER_SHAPES.items():
            bound = 1.0 / np.sqrt(fan_in)
            self.layers[name] = Linear(
                self._rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                self._rng.uniform(-bound, bound, size=fan_out),
            )

    def __repr__(self):
        return "MlpModel(seed=%r, dropout=%r, parameters=%d)" % (
            self.seed,
            self.dropout,
            self.parameter_count,
        )

    def reseed(self, seed: int):
        """Restart the dropout mask stream"""
        self._rng = np.random.Generator(np.random.PCG64(seed))

    @property
    def parameter_count(self) -> int:
        return sum(array.size for _, array in self.parameters())

    def parameters(self) -> Iterator[Tuple[str, np.ndarray]]:
        """``(name, array)`` pairs in file order, weights before bias"""
        for name, layer in self.layers.items():
            yield name + ".weight", layer.weight
            yield name + ".bias", layer.bias

    def set_parameters(self, values: Dict[str, np.ndarray]):
        for name, layer in self.layers.items():
            for kind in ("weight", "bias"):
                key = "%s.%s" % (name, kind)
                value = np.asarray(values[key], dtype=float)
                current = getattr(layer, kind)
                if value.shape != current.shape:
                    raise InvalidParameterError(
                        "parameter %s has shape %r, expect %r"
                        % (key, value.shape, current.shape)
                    )
                setattr(layer, kind, value.copy())

    def copy(self) -> "MlpModel":
        other = MlpModel.__new__(MlpModel)
        other.seed = self.seed
        other.dropout = self.dropout
        other._rng = np.random.Generator(np.random.PCG64(self.seed))
        other._rng.bit_generator.state = self._rng.bit_generator.state
        other.layers = OrderedDict(
            (name, Linear(layer.weight.copy(), layer.bias.copy()))
            for name, layer in self.layers.items()
        )
        return other

    def _mask(self, shape, training: bool) -> np.ndarray:
        if not training or self.dropout == 0.0:
            return np.ones(shape)
        keep = self._rng.random(shape) >= self.dropout
        return keep / (1.0 - self.dropout)

    def forward_with_cache(
        self, features, training: bool = False
    ) -> Tuple[np.ndarray, ForwardCache]:
        batch, _ = _as_batch(features)
        batch = FEATURE_SCALE * batch
        history = batch[:, :HISTORY_SIZE]
        path = batch[:, HISTORY_SIZE:]
        joined = np.concatenate(
            [self.layers["embed_history"](history), self.layers["embed_path"](path)],
            axis=1,
        )
        pre1 = self.layers["hidden1"](joined)
        mask1 = self._mask(pre1.shape, training)
        out1 = np.maximum(pre1, 0.0) * mask1
        pre2 = self.layers["hidden2"](out1)
        mask2 = self._mask(pre2.shape, training)
        out2 = np.maximum(pre2, 0.0) * mask2
        output = WAYPOINT_SCALE * self.layers["output"](out2)
        cache = ForwardCache(
            history, path, joined, pre1, mask1, out1, pre2, mask2, out2
        )
        return output.reshape(len(batch), OUTPUT_WAYPOINTS, 2), cache

    def forward(self, features, training: bool = False) -> np.ndarray:
        """Waypoints (80, 2) for one feature vector, (B, 80, 2) for a batch"""
        _, single = _as_batch(features)
        waypoints, _ = self.forward_with_cache(features, training)
        return waypoints[0] if single else waypoints

    __call__ = forward

    def backward(
        self, cache: ForwardCache, grad_waypoints: np.ndarray
    ) -> Dict[str, np.ndarray]:
        """Parameter gradients given the loss gradient w.r.t. the batched
        waypoints of :meth:`forward_with_cache`"""
        grad = WAYPOINT_SCALE * np.asarray(grad_waypoints).reshape(
            len(cache.out2), -1
        )
        grads = {}

        def linear(name: str, inputs: np.ndarray, upstream: np.ndarray):
            grads[name + ".weight"] = inputs.T @ upstream
            grads[name + ".bias"] = upstream.sum(axis=0)
            return upstream @ self.layers[name].weight.T

        grad = linear("output", cache.out2, grad)
        grad = grad * cache.mask2 * (cache.pre2 > 0.0)
        grad = linear("hidden2", cache.out1, grad)
        grad = grad * cache.mask1 * (cache.pre1 > 0.0)
        grad = linear("hidden1", cache.joined, grad)
        linear("embed_history", cache.history, grad[:, :EMBED_SIZE])
        linear("embed_path", cache.path, grad[:, EMBED_SIZE:])
        return grads


def mlp_forward(
    model: MlpModel,
    features: Union[FeatureVector, np.ndarray],
    training: bool = False,
) -> np.ndarray:
    return model.forward(features, training)


def _check_pair(pred, target) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.shape[-1:] != (2,):
        raise InvalidParameterError(
            "waypoint shape mismatch: %r vs %r" % (pred.shape, target.shape)
        )
    return pred, target


def l2_loss(pred, target) -> float:
    """Mean squared Euclidean distance over all waypoints, m^2"""
    pred, target = _check_pair(pred, target)
    return float(np.mean(np.sum((pred - target) ** 2, axis=-1)))


def l2_loss_gradient(pred, target) -> np.ndarray:
    pred, target = _check_pair(pred, target)
    count = pred.size // 2
    return 2.0 * (pred - target) / count
