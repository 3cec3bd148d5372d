from .predictor import (
    KINDS,
    NETWORK,
    SINGLE_LINK,
    InferenceSession,
    PredictorModel,
    gru_step,
    laplace_nll,
    predict_arrays,
    rnn_forward,
    stgnn_forward,
)
from .train import TrainConfig, TrainResult, check_gradients, gradient_check, train

__all__ = [
    "KINDS", "NETWORK", "SINGLE_LINK", "InferenceSession", "PredictorModel", "gru_step",
    "laplace_nll", "predict_arrays", "rnn_forward", "stgnn_forward", "TrainConfig",
    "TrainResult", "check_gradients", "gradient_check", "train",
]
