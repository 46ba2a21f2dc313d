from .artifact import ModelArtifact, cnn_lstm_artifact, linear_artifact, load_artifact, save_artifact
from .cnn_lstm import (
    CnnLstmModel,
    CnnLstmWeights,
    TrainHistory,
    cnn_lstm_forward,
    cnn_lstm_train,
    gradient_check,
    init_cnn_lstm,
)
from .linear import LinearModel, fit_ols, predict_linear

__all__ = [
    "CnnLstmModel",
    "CnnLstmWeights",
    "LinearModel",
    "ModelArtifact",
    "TrainHistory",
    "cnn_lstm_artifact",
    "cnn_lstm_forward",
    "cnn_lstm_train",
    "fit_ols",
    "gradient_check",
    "init_cnn_lstm",
    "linear_artifact",
    "load_artifact",
    "predict_linear",
    "save_artifact",
]
