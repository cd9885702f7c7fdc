# hybridplan.neural.expert drives the simulator and is imported on its own
from hybridplan.neural.features import (
    FEATURE_SIZE,
    FeatureVector,
    decode_waypoints,
    encode_features,
    extend_planner_path,
)
from hybridplan.neural.mlp import MlpModel, l2_loss, mlp_forward
from hybridplan.neural.model_file import load_model, save_model
from hybridplan.neural.train import (
    LossHistory,
    TrainerConfig,
    TrainingSample,
    evaluate_against_baseline,
    read_dataset,
    train,
    write_dataset,
)

__all__ = [
    "FEATURE_SIZE",
    "FeatureVector",
    "LossHistory",
    "MlpModel",
    "TrainerConfig",
    "TrainingSample",
    "decode_waypoints",
    "encode_features",
    "evaluate_against_baseline",
    "extend_planner_path",
    "l2_loss",
    "load_model",
    "mlp_forward",
    "read_dataset",
    "save_model",
    "train",
    "write_dataset",
]
